#pragma once

// Binary and corpus generation on top of programs, runtime pools and the
// linker.

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "plcbinx/forge/link.hpp"
#include "plcbinx/forge/program.hpp"
#include "plcbinx/io.hpp"

namespace plcbinx::forge {

struct ForgeSpec {
  std::uint32_t programs_per_label = 8;
  std::vector<std::string> labels{kFunctionalityLabels.begin(), kFunctionalityLabels.end()};
  std::vector<Platform> platforms{std::begin(kAllPlatforms), std::end(kAllPlatforms)};
  double skip_probability = 0.3;  // chance a program lacks one platform build
  std::uint32_t max_skips_per_label = 7;
  std::uint64_t seed = 1;
  std::size_t max_binaries = 0;  // 0 keeps the whole plan
};

inline ojson to_json(const ForgeSpec& s) {
  ojson j;
  j["programs_per_label"] = s.programs_per_label;
  j["labels"] = s.labels;
  j["platforms"] = ojson::array();
  for (Platform p : s.platforms) j["platforms"].push_back(to_string(p));
  j["skip_probability"] = s.skip_probability;
  j["max_skips_per_label"] = s.max_skips_per_label;
  j["seed"] = s.seed;
  j["max_binaries"] = s.max_binaries;
  return j;
}

struct PlannedBinary {
  BinaryMeta meta;
  std::uint64_t program_seed = 0;
  std::uint64_t binary_seed = 0;
};

inline std::string program_id_for(const std::string& label, std::uint32_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-p%02u", k);
  return label + buf;
}

inline std::vector<PlannedBinary> plan_corpus(const ForgeSpec& spec) {
  std::vector<PlannedBinary> plan;
  const std::string salt = ":" + std::to_string(spec.seed);
  for (const auto& label : spec.labels) {
    profile_for(label);
    std::uint32_t skips = 0;
    for (std::uint32_t k = 0; k < spec.programs_per_label; ++k) {
      const std::string pid = program_id_for(label, k);
      const std::uint64_t pseed = fnv1a64(pid + salt);
      Rng rng(pseed);
      std::optional<Platform> skip;
      if (spec.platforms.size() > 1 && rng.chance(spec.skip_probability) && skips < spec.max_skips_per_label) {
        skip = spec.platforms[rng.below(spec.platforms.size())];
        ++skips;
      }
      for (Platform p : spec.platforms) {
        if (skip == p) continue;
        const std::string bid = pid + "-" + to_string(p);
        plan.push_back({{bid, pid, p, label}, pseed, fnv1a64(bid + salt)});
      }
    }
  }
  if (spec.max_binaries && plan.size() > spec.max_binaries) plan.resize(spec.max_binaries);
  return plan;
}

// Runtime functions for one binary: the scheduler and library routines the
// core code calls, plus a random call-closed subset of the pool. Leaf
// routines only enter as callees, since nothing else marks their entries.
inline std::vector<std::string> select_runtime(Platform p, const std::vector<ForgeFunction>& core, Rng& rng) {
  const RuntimePool& pool = runtime_pool(p);
  std::set<std::string> core_names;
  for (const auto& f : core) core_names.insert(f.name);
  std::vector<std::string> chosen;
  std::set<std::string> have;
  auto add = [&](const std::string& name) {
    for (const auto& n : pool.closure(name))
      if (have.insert(n).second) chosen.push_back(n);
  };
  add(startup_name(p));
  add(scheduler_name(p));
  for (const auto& f : core)
    for (const auto& it : f.body.items)
      if (it.kind == Item::Kind::Call && !core_names.contains(it.callee)) add(it.callee);

  const std::size_t target = std::max<std::size_t>(rng.between(20, 80), chosen.size());
  std::vector<std::string> candidates;
  for (const auto& s : pool.specs)
    if (s.shape == RuntimeShape::Simple || s.shape == RuntimeShape::Caller) candidates.push_back(s.name);
  rng.shuffle(candidates);
  for (const auto& c : candidates) {
    if (chosen.size() >= target) break;
    std::size_t extra = 0;
    for (const auto& n : pool.closure(c)) extra += !have.contains(n);
    if (chosen.size() + extra <= target) add(c);
  }
  return chosen;
}

inline ForgedBinary forge_binary(const Program& prog, const BinaryMeta& meta, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ForgeFunction> fns = lower_program(prog, meta.platform);
  const std::string main_name = fns.front().name;
  for (const auto& n : select_runtime(meta.platform, fns, rng)) fns.push_back(lower_runtime(meta.platform, n, main_name));

  LinkOptions opt;
  opt.seed = rng.next();
  opt.pe_split = rng.chance(0.3);
  opt.pe_coff = rng.chance(0.5);
  opt.alias_record = format_for(meta.platform) == BinaryFormat::APP && rng.chance(0.3);
  opt.data_symbol = rng.chance(0.7);
  for (int attempt = 0;; ++attempt) {
    rng.shuffle(fns);
    std::stable_partition(fns.begin(), fns.end(), [&](const ForgeFunction& f) { return f.name == startup_name(meta.platform); });
    try {
      return link_binary(fns, meta, opt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EncodingOverflow || attempt == 3) throw;
    }
  }
}

inline ForgedBinary forge_planned(const PlannedBinary& b) {
  return forge_binary(forge_program(b.meta.label, b.program_seed), b.meta, b.binary_seed);
}

struct CorpusEntry {
  BinaryMeta meta;
  std::string path;  // relative to the corpus directory
  std::size_t core_functions = 0;
};

inline std::string binary_path(const BinaryMeta& m) {
  return "bin/" + m.binary_id + "." + extension_for(format_for(m.platform));
}

inline std::string manifest_path(const std::string& binary_id) { return "manifests/" + binary_id + ".json"; }

inline std::string index_tsv(const std::vector<CorpusEntry>& entries) {
  std::string s = "binary_id\tprogram_id\tplatform\tlabel\tpath\n";
  for (const auto& e : entries)
    s += e.meta.binary_id + "\t" + e.meta.program_id + "\t" + to_string(e.meta.platform) + "\t" + e.meta.label + "\t" +
         e.path + "\n";
  return s;
}

inline constexpr const char* kIndexFile = "corpus-index.tsv";

// Writes binaries, manifests and the index under `dir`.
inline std::vector<CorpusEntry> forge_corpus(const ForgeSpec& spec, const fs::path& dir, std::size_t jobs = 1) {
  const auto plan = plan_corpus(spec);
  std::vector<CorpusEntry> entries(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const ForgedBinary fb = forge_planned(plan[i]);
    const std::string path = binary_path(plan[i].meta);
    write_atomic(dir / path, fb.bytes);
    write_atomic(dir / manifest_path(plan[i].meta.binary_id), to_json(fb.manifest).dump() + "\n");
    entries[i] = {plan[i].meta, path, fb.manifest.core_count()};
  });
  write_atomic(dir / kIndexFile, index_tsv(entries));
  return entries;
}

}  // namespace plcbinx::forge
