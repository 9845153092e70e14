#pragma once

// Ten-fold program-level cross-validation for both tasks, with a majority
// baseline, per-platform breakdowns and protocol invariants checked on every
// run.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/corefn.hpp"
#include "plcbinx/metrics.hpp"
#include "plcbinx/models.hpp"

namespace plcbinx {

inline constexpr std::size_t kFolds = 10;

// Fold of one program; a seed switches to the seeded variant.
inline std::size_t fold_of(const std::string& program_id, std::optional<std::uint64_t> seed = {},
                           std::size_t folds = kFolds) {
  const std::string key = seed ? std::to_string(*seed) + ":" + program_id : program_id;
  return static_cast<std::size_t>(fnv1a64(key) % folds);
}

inline std::map<std::string, std::size_t> assign_folds(const std::vector<std::string>& program_ids,
                                                       std::optional<std::uint64_t> seed = {},
                                                       std::size_t folds = kFolds) {
  if (program_ids.empty()) throw Error(ErrorKind::Usage, "no programs to assign to folds");
  std::map<std::string, std::size_t> out;
  for (const auto& p : program_ids) out.emplace(p, fold_of(p, seed, folds));
  return out;
}

enum class Task { Toolchain, Functionality };

inline const char* to_string(Task t) { return t == Task::Toolchain ? "toolchain" : "functionality"; }

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "toolchain") return Task::Toolchain;
  if (s == "functionality") return Task::Functionality;
  return std::nullopt;
}

struct EvalItem {
  std::string binary_id;
  std::string program_id;
  Platform platform = Platform::GEB;
  std::size_t fold = 0;
  std::string truth;
  std::string prediction;
  std::string baseline;
  std::optional<Family> stage1;  // toolchain task only
};

struct PlatformRow {
  Platform platform;
  std::size_t support = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0, accuracy = 0;
};

struct EvalReport {
  Task task = Task::Toolchain;
  FunctionSelection selection = FunctionSelection::Runtime;
  std::vector<std::string> labels;
  std::vector<EvalItem> items;
  Metrics overall;
  Metrics baseline;
  std::vector<Metrics> per_fold;
  std::vector<PlatformRow> per_platform;
  std::vector<std::string> invariants;  // checks that ran and held
  double seconds = 0;
};

struct EvalOptions {
  Task task = Task::Toolchain;
  FunctionSelection selection = FunctionSelection::Runtime;
  LearnConfig learn;
  CoreRules rules = default_core_rules();
  std::optional<std::uint64_t> fold_seed;
  std::size_t folds = kFolds;
  std::function<void(const std::string&)> progress;
};

namespace detail {

[[noreturn]] inline void invariant_failed(const std::string& what) {
  throw Error(ErrorKind::InvariantViolation, what);
}

inline void check_weighted_identity(const Metrics& m, const std::string& what) {
  std::size_t support = 0;
  double p = 0, r = 0, f = 0;
  for (std::size_t l = 0; l < m.labels.size(); ++l) {
    std::size_t tp = m.confusion[l][l], row = 0, col = 0;
    for (std::size_t k = 0; k < m.labels.size(); ++k) {
      row += m.confusion[l][k];
      col += m.confusion[k][l];
    }
    const double pl = safe_div(static_cast<double>(tp), static_cast<double>(col));
    const double rl = safe_div(static_cast<double>(tp), static_cast<double>(row));
    const double fl = safe_div(2 * pl * rl, pl + rl);
    support += row;
    p += static_cast<double>(row) * pl;
    r += static_cast<double>(row) * rl;
    f += static_cast<double>(row) * fl;
  }
  const double n = static_cast<double>(support);
  if (support != m.total) invariant_failed(what + ": support sum " + std::to_string(support) + " != " + std::to_string(m.total));
  auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
  if (!close(safe_div(p, n), m.weighted_precision) || !close(safe_div(r, n), m.weighted_recall) ||
      !close(safe_div(f, n), m.weighted_f1))
    invariant_failed(what + ": weighted metrics disagree with the confusion matrix");
}

inline std::vector<PlatformRow> platform_rows(const std::vector<EvalItem>& items, const std::vector<std::string>& labels) {
  std::vector<PlatformRow> rows;
  for (Platform p : kAllPlatforms) {
    std::vector<std::string> pred, truth;
    for (const auto& it : items)
      if (it.platform == p) {
        pred.push_back(it.prediction);
        truth.push_back(it.truth);
      }
    if (truth.empty()) continue;
    const Metrics m = metrics(pred, truth, labels);
    rows.push_back({p, truth.size(), m.weighted_precision, m.weighted_recall, m.weighted_f1, m.accuracy});
  }
  return rows;
}

}  // namespace detail

// `records` are unclassified recovery records carrying platform and
// functionality labels.
inline EvalReport run_experiment(const std::vector<FunctionProgramRecord>& records, const EvalOptions& opt,
                                 Diagnostics* diags = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport rep;
  rep.task = opt.task;
  rep.selection = opt.selection;
  for (const auto& r : records) {
    if (!r.platform_label) throw Error(ErrorKind::SchemaViolation, r.binary_id + ": missing platform label");
    if (opt.task == Task::Functionality && !r.functionality_label)
      throw Error(ErrorKind::SchemaViolation, r.binary_id + ": missing functionality label");
  }
  if (opt.task == Task::Toolchain) {
    for (Platform p : kAllPlatforms) rep.labels.push_back(to_string(p));
  } else {
    rep.labels = default_functionality_labels();
  }

  std::vector<std::string> programs;
  for (const auto& r : records) programs.push_back(r.program_id);
  const auto folds = assign_folds(programs, opt.fold_seed, opt.folds);

  // Categories from the true platform, as used for training and for the
  // functionality task.
  std::vector<FunctionProgramRecord> classified;
  classified.reserve(records.size());
  for (const auto& r : records) classified.push_back(classify(r, *r.platform_label, opt.rules, diags));

  auto truth_of = [&](const FunctionProgramRecord& r) {
    return opt.task == Task::Toolchain ? std::string(to_string(*r.platform_label)) : *r.functionality_label;
  };

  for (std::size_t k = 0; k < opt.folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < records.size(); ++i) (folds.at(records[i].program_id) == k ? test : train).push_back(i);
    if (test.empty()) continue;
    std::set<std::string> train_programs, test_programs;
    for (auto i : train) train_programs.insert(records[i].program_id);
    for (auto i : test) test_programs.insert(records[i].program_id);
    for (const auto& p : test_programs)
      if (train_programs.contains(p)) detail::invariant_failed("fold " + std::to_string(k) + " leaks program " + p);
    if (train.empty()) throw Error(ErrorKind::EmptyTrainingFold, "fold " + std::to_string(k) + " has no training data");
    if (opt.progress)
      opt.progress("fold " + std::to_string(k) + ": train " + std::to_string(train.size()) + ", test " +
                   std::to_string(test.size()));

    std::vector<FunctionProgramRecord> train_set;
    std::vector<std::string> train_y;
    for (auto i : train) {
      train_set.push_back(classified[i]);
      train_y.push_back(truth_of(records[i]));
    }
    const std::string majority = majority_label(train_y);
    LearnConfig cfg = opt.learn;

    std::vector<std::string> fold_pred, fold_truth;
    if (opt.task == Task::Toolchain) {
      ToolchainModel model = train_toolchain(train_set, opt.selection, cfg, diags);
      for (auto i : test) {
        const auto p = predict_toolchain(model, records[i], opt.rules, std::nullopt, diags);
        rep.items.push_back({records[i].binary_id, records[i].program_id, *records[i].platform_label, k,
                             truth_of(records[i]), to_string(p.platform), majority, p.family});
      }
    } else {
      FunctionalityModel model = train_functionality(train_set, opt.selection, cfg, rep.labels, diags);
      for (auto i : test)
        rep.items.push_back({records[i].binary_id, records[i].program_id, *records[i].platform_label, k,
                             truth_of(records[i]), predict_functionality(model, classified[i]), majority, {}});
    }
    for (const auto& it : rep.items)
      if (it.fold == k) {
        fold_pred.push_back(it.prediction);
        fold_truth.push_back(it.truth);
      }
    rep.per_fold.push_back(metrics(fold_pred, fold_truth, rep.labels));
  }

  // Coverage: one prediction per labeled binary.
  std::map<std::string, std::size_t> seen;
  for (const auto& it : rep.items) ++seen[it.binary_id];
  if (rep.items.size() != records.size()) detail::invariant_failed("coverage: prediction count != binary count");
  for (const auto& r : records)
    if (seen[r.binary_id] != 1) detail::invariant_failed("coverage: " + r.binary_id + " predicted " + std::to_string(seen[r.binary_id]) + " times");
  rep.invariants.push_back("no-leak");
  rep.invariants.push_back("coverage");

  std::vector<std::string> pred, truth, base;
  for (const auto& it : rep.items) {
    pred.push_back(it.prediction);
    truth.push_back(it.truth);
    base.push_back(it.baseline);
  }
  rep.overall = metrics(pred, truth, rep.labels);
  rep.baseline = metrics(base, truth, rep.labels);
  detail::check_weighted_identity(rep.overall, "overall");
  detail::check_weighted_identity(rep.baseline, "baseline");
  for (std::size_t k = 0; k < rep.per_fold.size(); ++k)
    detail::check_weighted_identity(rep.per_fold[k], "fold " + std::to_string(k));
  rep.invariants.push_back("weighted-identity");

  if (opt.task == Task::Toolchain) {
    for (const auto& it : rep.items) {
      const auto plat = parse_platform(it.prediction);
      if (!it.stage1 || !plat || family_of(*plat) != *it.stage1)
        detail::invariant_failed("hierarchy: " + it.binary_id + " stage 1 and final label disagree");
    }
    rep.invariants.push_back("hierarchical-consistency");
  }
  rep.per_platform = detail::platform_rows(rep.items, rep.labels);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---- reports ----

inline std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100 * v);
  return buf;
}

// Per-label rows plus the weighted row, percentages with two decimals.
inline std::string report_tsv(const EvalReport& r) {
  std::string s = "label\tsupport\tprecision\trecall\tf1\n";
  for (const auto& row : r.overall.per_label)
    s += row.label + "\t" + std::to_string(row.support) + "\t" + fmt_pct(row.precision) + "\t" + fmt_pct(row.recall) +
         "\t" + fmt_pct(row.f1) + "\n";
  s += "weighted\t" + std::to_string(r.overall.total) + "\t" + fmt_pct(r.overall.weighted_precision) + "\t" +
       fmt_pct(r.overall.weighted_recall) + "\t" + fmt_pct(r.overall.weighted_f1) + "\n";
  s += "baseline\t" + std::to_string(r.baseline.total) + "\t" + fmt_pct(r.baseline.weighted_precision) + "\t" +
       fmt_pct(r.baseline.weighted_recall) + "\t" + fmt_pct(r.baseline.weighted_f1) + "\n";
  return s;
}

inline std::string platform_tsv(const EvalReport& r) {
  std::string s = "platform\tsupport\tprecision\trecall\tf1\taccuracy\n";
  for (const auto& p : r.per_platform)
    s += std::string(to_string(p.platform)) + "\t" + std::to_string(p.support) + "\t" + fmt_pct(p.weighted_precision) +
         "\t" + fmt_pct(p.weighted_recall) + "\t" + fmt_pct(p.weighted_f1) + "\t" + fmt_pct(p.accuracy) + "\n";
  return s;
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["total"] = m.total;
  j["weighted_precision"] = m.weighted_precision;
  j["weighted_recall"] = m.weighted_recall;
  j["weighted_f1"] = m.weighted_f1;
  j["accuracy"] = m.accuracy;
  j["per_label"] = nlohmann::ordered_json::array();
  for (const auto& r : m.per_label)
    j["per_label"].push_back(
        {{"label", r.label}, {"support", r.support}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}});
  j["labels"] = m.labels;
  j["confusion"] = m.confusion;
  return j;
}

// Wall-clock time is left out so reports stay byte-identical across runs.
inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["task"] = to_string(r.task);
  j["selection"] = to_string(r.selection);
  j["overall"] = to_json(r.overall);
  j["baseline"] = to_json(r.baseline);
  j["per_fold"] = nlohmann::ordered_json::array();
  for (const auto& m : r.per_fold) j["per_fold"].push_back(to_json(m));
  j["per_platform"] = nlohmann::ordered_json::array();
  for (const auto& p : r.per_platform)
    j["per_platform"].push_back({{"platform", to_string(p.platform)},
                                 {"support", p.support},
                                 {"weighted_precision", p.weighted_precision},
                                 {"weighted_recall", p.weighted_recall},
                                 {"weighted_f1", p.weighted_f1},
                                 {"accuracy", p.accuracy}});
  j["invariants"] = r.invariants;
  j["predictions"] = nlohmann::ordered_json::array();
  for (const auto& it : r.items) {
    nlohmann::ordered_json o{{"binary_id", it.binary_id}, {"program_id", it.program_id},
                             {"platform", to_string(it.platform)}, {"fold", it.fold},
                             {"truth", it.truth}, {"prediction", it.prediction}, {"baseline", it.baseline}};
    if (it.stage1) o["stage1"] = to_string(*it.stage1);
    j["predictions"].push_back(std::move(o));
  }
  return j;
}

}  // namespace plcbinx
