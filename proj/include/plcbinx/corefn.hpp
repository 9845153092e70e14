#pragma once

// Core (application logic) vs runtime split of recovered functions, driven by
// per-platform name rules and a call-graph traversal from seed functions.

#include <algorithm>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/funcrec.hpp"

namespace plcbinx {

// Case-sensitive glob with `*` and `?`.
inline bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

inline bool match_any(const std::vector<std::string>& patterns, std::string_view text) {
  return std::any_of(patterns.begin(), patterns.end(), [&](const std::string& p) { return glob_match(p, text); });
}

struct CoreRuleSet {
  std::vector<Platform> platforms;
  std::vector<std::string> seed_patterns;
  std::vector<std::string> include_patterns;
  std::vector<std::string> exclude_patterns;
  // Without traversal every eligible function is core once a seed is present.
  bool traverse = true;

  bool eligible(std::string_view id) const {
    return match_any(include_patterns, id) && !match_any(exclude_patterns, id);
  }
  bool applies_to(Platform p) const { return std::find(platforms.begin(), platforms.end(), p) != platforms.end(); }
};

struct CoreRules {
  std::vector<CoreRuleSet> sets;

  const CoreRuleSet& for_platform(Platform p) const {
    for (const auto& s : sets)
      if (s.applies_to(p)) return s;
    throw Error(ErrorKind::Usage, std::string("no core rule set for platform ") + to_string(p));
  }
};

inline CoreRules default_core_rules() {
  CoreRules r;
  r.sets.push_back({{Platform::CODESYSv3}, {"PLC_PRG"}, {"*"}, {"sub_*"}, false});
  r.sets.push_back({{Platform::GEB}, {"dt_PR_*exec"}, {"dt_PR_*", "dt_FN_*", "dt_FB_*"}, {}, true});
  r.sets.push_back({{Platform::OpenPLCv2, Platform::OpenPLCv3},
                    {"*PROGRAM0_body__*"},
                    {"*"},
                    {// C/C++ standard library
                     "_Z*", "mem*", "str*", "__aeabi_*", "__libc_*", "__cxa_*", "__gxx_*", "__stack_chk_*",
                     "__do_global_*", "__register_*", "__deregister_*", "abort", "exit", "atexit", "malloc",
                     "free", "calloc", "realloc", "printf", "sprintf", "snprintf", "puts", "fopen", "fclose",
                     "fread", "fwrite", "sleep", "usleep", "pthread_*", "socket", "bind", "listen", "accept",
                     "send", "recv", "close", "open", "read", "write",
                     // OpenPLC runtime
                     "Vc_*", "config_*", "glueVars", "updateBuffers*", "initializeHardware", "finalizeHardware",
                     "updateTime", "setupCycleDelay", "sleep_until", "handleConnections", "startServer",
                     "processMessage", "log_*", "opl_*",
                     // platform support: GPIO / fieldbus / protocol stacks
                     "wiringPi*", "digital*", "analog*", "pwm*", "pinMode", "pullUpDnControl", "delay*", "millis",
                     "micros", "softPwm*", "serial*", "i2c*", "spi*", "*Modbus*", "*modbus*", "mb_*", "enip_*",
                     "*ENIP*", "pccc_*", "*PCCC*", "dnp3_*", "*DNP3*", "cip_*", "*_CIP*"},
                    true});
  return r;
}

inline nlohmann::ordered_json rules_to_json(const CoreRules& rules) {
  nlohmann::ordered_json j;
  j["rules"] = nlohmann::ordered_json::array();
  for (const auto& s : rules.sets) {
    nlohmann::ordered_json o;
    o["platforms"] = nlohmann::ordered_json::array();
    for (Platform p : s.platforms) o["platforms"].push_back(to_string(p));
    o["seed_patterns"] = s.seed_patterns;
    o["include_patterns"] = s.include_patterns;
    o["exclude_patterns"] = s.exclude_patterns;
    o["traverse"] = s.traverse;
    j["rules"].push_back(std::move(o));
  }
  return j;
}

inline CoreRules rules_from_json(const nlohmann::ordered_json& j) {
  CoreRules r;
  try {
    for (const auto& o : j.at("rules")) {
      CoreRuleSet s;
      for (const auto& p : o.at("platforms")) {
        auto plat = parse_platform(p.get<std::string>());
        if (!plat) throw Error(ErrorKind::SchemaViolation, "rules.json: unknown platform " + p.get<std::string>());
        s.platforms.push_back(*plat);
      }
      s.seed_patterns = o.at("seed_patterns").get<std::vector<std::string>>();
      s.include_patterns = o.at("include_patterns").get<std::vector<std::string>>();
      s.exclude_patterns = o.at("exclude_patterns").get<std::vector<std::string>>();
      s.traverse = o.value("traverse", true);
      r.sets.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("rules.json: ") + e.what());
  }
  return r;
}

// Indices of the core functions of `rec` under one rule set; nullopt when no
// seed is present.
inline std::optional<std::set<std::size_t>> core_set(const FunctionProgramRecord& rec, const CoreRuleSet& rules) {
  std::multimap<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < rec.functions.size(); ++i) by_id.emplace(rec.functions[i].id, i);

  std::set<std::size_t> core;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < rec.functions.size(); ++i)
    if (match_any(rules.seed_patterns, rec.functions[i].id)) {
      core.insert(i);
      queue.push_back(i);
    }
  if (core.empty()) return std::nullopt;

  if (!rules.traverse) {
    for (std::size_t i = 0; i < rec.functions.size(); ++i)
      if (rules.eligible(rec.functions[i].id)) core.insert(i);
    return core;
  }

  while (!queue.empty()) {
    const auto& fn = rec.functions[queue.front()];
    queue.pop_front();
    for (const auto& c : fn.calls) {
      if (c.kind != CallKind::DirectResolved || !rules.eligible(c.name)) continue;
      auto [lo, hi] = by_id.equal_range(c.name);
      for (auto it = lo; it != hi; ++it)
        if (core.insert(it->second).second) queue.push_back(it->second);
    }
  }
  return core;
}

inline FunctionProgramRecord apply_core_set(FunctionProgramRecord rec, const std::set<std::size_t>& core) {
  for (std::size_t i = 0; i < rec.functions.size(); ++i)
    rec.functions[i].category = core.contains(i) ? Category::Core : Category::Runtime;
  return rec;
}

inline FunctionProgramRecord classify(FunctionProgramRecord rec, Platform platform, const CoreRules& rules,
                                      Diagnostics* diags = nullptr) {
  auto core = core_set(rec, rules.for_platform(platform));
  if (!core) {
    if (diags)
      diags->push_back("NoSeedFound: " + rec.binary_id + " has no " + to_string(platform) +
                       " seed; all functions runtime");
    core.emplace();
  }
  return apply_core_set(std::move(rec), *core);
}

// Platform-free variant used before the platform is known: a function is core
// if any rule set would make it core.
inline FunctionProgramRecord classify_any(FunctionProgramRecord rec, const CoreRules& rules,
                                          Diagnostics* diags = nullptr) {
  std::set<std::size_t> core;
  bool seeded = false;
  for (const auto& s : rules.sets) {
    if (auto c = core_set(rec, s)) {
      seeded = true;
      core.insert(c->begin(), c->end());
    }
  }
  if (!seeded && diags) diags->push_back("NoSeedFound: " + rec.binary_id + " matches no platform seed");
  return apply_core_set(std::move(rec), core);
}

struct DistributionRow {
  Platform platform;
  std::size_t binaries = 0;
  std::size_t core_total = 0;
  double core_per_binary = 0, core_size_mean = 0, core_size_median = 0;
  std::size_t runtime_total = 0;
  double runtime_per_binary = 0, runtime_size_mean = 0, runtime_size_median = 0;
};

inline double lower_median(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  return static_cast<double>(v[(v.size() - 1) / 2]);
}

inline double mean_of(const std::vector<std::uint64_t>& v) {
  if (v.empty()) return 0;
  long double s = 0;
  for (auto x : v) s += x;
  return static_cast<double>(s / v.size());
}

inline std::vector<DistributionRow> distribution_stats(const std::vector<FunctionProgramRecord>& records) {
  std::vector<DistributionRow> rows;
  for (Platform p : kAllPlatforms) {
    DistributionRow row{p};
    std::vector<std::uint64_t> core_sizes, runtime_sizes;
    for (const auto& r : records) {
      if (r.platform_label != p) continue;
      ++row.binaries;
      for (const auto& f : r.functions) {
        if (f.category == Category::Core) core_sizes.push_back(f.size_bytes);
        else if (f.category == Category::Runtime) runtime_sizes.push_back(f.size_bytes);
      }
    }
    if (row.binaries == 0) continue;  // EmptyPlatform
    const double n = static_cast<double>(row.binaries);
    row.core_total = core_sizes.size();
    row.core_per_binary = static_cast<double>(row.core_total) / n;
    row.core_size_mean = mean_of(core_sizes);
    row.core_size_median = lower_median(core_sizes);
    row.runtime_total = runtime_sizes.size();
    row.runtime_per_binary = static_cast<double>(row.runtime_total) / n;
    row.runtime_size_mean = mean_of(runtime_sizes);
    row.runtime_size_median = lower_median(runtime_sizes);
    rows.push_back(row);
  }
  return rows;
}

inline std::string distribution_tsv(const std::vector<DistributionRow>& rows) {
  std::string out =
      "platform\tbinaries\tcore_total\tcore_per_binary\tcore_size_mean\tcore_size_median\t"
      "runtime_total\truntime_per_binary\truntime_size_mean\truntime_size_median\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%zu\t%.2f\t%.1f\t%.1f\t%zu\t%.2f\t%.1f\t%.1f\n", to_string(r.platform),
                  r.binaries, r.core_total, r.core_per_binary, r.core_size_mean, r.core_size_median,
                  r.runtime_total, r.runtime_per_binary, r.runtime_size_mean, r.runtime_size_median);
    out += buf;
  }
  return out;
}

}  // namespace plcbinx
