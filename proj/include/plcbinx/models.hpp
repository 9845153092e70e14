#pragma once

// Task-level models: two-stage toolchain prediction and graph-based
// functionality prediction, with feature extraction, training, inference and
// versioned JSON persistence.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/corefn.hpp"
#include "plcbinx/labels.hpp"
#include "plcbinx/learn/gnn.hpp"
#include "plcbinx/learn/linear.hpp"
#include "plcbinx/learn/params_io.hpp"
#include "plcbinx/learn/seqmodel.hpp"
#include "plcbinx/learn/train.hpp"
#include "plcbinx/metrics.hpp"
#include "plcbinx/represent.hpp"

namespace plcbinx {

inline constexpr int kModelVersion = 1;
inline constexpr const char* kModelFormat = "plcbinx-model";

struct LearnConfig {
  learn::SeqClassifierConfig seq;
  learn::LogisticConfig logistic;
  std::uint32_t fingerprint_dim = 4096;
  learn::GnnConfig gnn;
  learn::TrainConfig train;
  // One program in `validation_buckets` is held out of training for model
  // selection; 0 or 1 disables validation.
  std::uint64_t validation_buckets = 10;

  LearnConfig with_seed(std::uint64_t s) const {
    LearnConfig c = *this;
    c.seq.seed = s;
    c.gnn.seed = s;
    c.train.seed = s;
    return c;
  }
};

inline nlohmann::ordered_json to_json(const LearnConfig& c) {
  nlohmann::ordered_json s2 = learn::to_json(c.logistic);
  s2["dim"] = c.fingerprint_dim;
  return {{"stage1", learn::to_json(c.seq)},
          {"stage2", s2},
          {"gnn", learn::to_json(c.gnn)},
          {"train", learn::to_json(c.train)},
          {"validation_buckets", c.validation_buckets}};
}

inline LearnConfig learn_config_from_json(const nlohmann::ordered_json& j) {
  LearnConfig c;
  try {
    if (j.contains("stage1")) c.seq = learn::seq_config_from_json(j.at("stage1"));
    if (j.contains("stage2")) {
      c.logistic = learn::logistic_config_from_json(j.at("stage2"));
      c.fingerprint_dim = j.at("stage2").value("dim", c.fingerprint_dim);
    }
    if (j.contains("gnn")) c.gnn = learn::gnn_config_from_json(j.at("gnn"));
    if (j.contains("train")) c.train = learn::train_config_from_json(j.at("train"));
    c.validation_buckets = j.value("validation_buckets", c.validation_buckets);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("train.json: ") + e.what());
  }
  return c;
}

// ---- features ----

inline std::vector<std::uint32_t> stage1_features(const FunctionProgramRecord& rec, FunctionSelection sel,
                                                  const learn::SeqClassifierConfig& cfg,
                                                  Diagnostics* diags = nullptr) {
  std::vector<std::uint32_t> idx;
  idx.reserve(cfg.max_len);
  bool any = false;
  for (const auto& fn : rec.functions) {
    if (!selected(fn, sel)) continue;
    any = true;
    for (const auto& tok : build_token_seq(fn).tokens) {
      if (idx.size() == cfg.max_len) break;
      idx.push_back(learn::vocab_index(tok, cfg.vocab));
    }
    if (idx.size() == cfg.max_len) break;
  }
  if (!any && diags)
    diags->push_back("NoRuntimeFunctions: " + rec.binary_id + " has no " + to_string(sel) + " functions");
  idx.resize(cfg.max_len, cfg.pad_index());
  return idx;
}

inline learn::SparseVec fingerprint_features(const Fingerprint& fp, std::uint32_t dim) {
  std::map<std::uint32_t, double> bag;
  for (auto h : fp.function_hashes) bag[static_cast<std::uint32_t>(fnv1a64("hash:" + hex_lower(h)) % dim)] += 1;
  for (const auto& [t, n] : fp.name_tokens) bag[static_cast<std::uint32_t>(fnv1a64("name:" + t) % dim)] += n;
  learn::SparseVec x;
  for (auto [k, c] : bag) x.emplace_back(k, std::log1p(c));
  if (fp.runtime_count) x.emplace_back(dim, std::log1p(fp.runtime_count));
  for (std::size_t i = 0; i < fp.size_histogram.size(); ++i)
    if (fp.size_histogram[i]) x.emplace_back(dim + 1 + static_cast<std::uint32_t>(i), std::log1p(fp.size_histogram[i]));
  return x;
}

inline std::size_t fingerprint_feature_dim(std::uint32_t dim) { return dim + 1 + kSizeHistogramBuckets; }

// ---- validation split ----

inline bool in_validation(const std::string& program_id, std::uint64_t seed, std::uint64_t buckets) {
  if (buckets <= 1) return false;
  return fnv1a64("validation:" + std::to_string(seed) + ":" + program_id) % buckets == 0;
}

struct Split {
  std::vector<std::size_t> train, validation;
};

inline Split validation_split(const std::vector<std::string>& program_ids, std::uint64_t seed,
                              std::uint64_t buckets) {
  Split s;
  for (std::size_t i = 0; i < program_ids.size(); ++i)
    (in_validation(program_ids[i], seed, buckets) ? s.validation : s.train).push_back(i);
  if (s.train.empty() || s.validation.empty()) {
    s.train.clear();
    s.validation.clear();
    for (std::size_t i = 0; i < program_ids.size(); ++i) s.train.push_back(i);
  }
  return s;
}

// ---- toolchain ----

struct ToolchainModel {
  LearnConfig cfg;
  FunctionSelection selection = FunctionSelection::Runtime;
  learn::SeqClassifier stage1{learn::SeqClassifierConfig{}};
  std::optional<learn::LogisticModel> stage2;
  // Used when training saw fewer than two OpenPLC versions.
  Platform stage2_constant = Platform::OpenPLCv2;
  learn::TrainLog stage1_log;
};

inline Platform stage2_predict(const ToolchainModel& m, const Fingerprint& fp) {
  if (!m.stage2) return m.stage2_constant;
  return m.stage2->predict(fingerprint_features(fp, m.cfg.fingerprint_dim)) == 1 ? Platform::OpenPLCv3
                                                                                 : Platform::OpenPLCv2;
}

// Training records must carry platform labels and categories.
inline ToolchainModel train_toolchain(const std::vector<FunctionProgramRecord>& records, FunctionSelection sel,
                                      const LearnConfig& cfg, Diagnostics* diags = nullptr) {
  if (records.empty()) throw Error(ErrorKind::EmptyTrainingFold, "toolchain training set is empty");
  ToolchainModel m;
  m.cfg = cfg;
  m.selection = sel;
  m.stage1 = learn::SeqClassifier(cfg.seq);

  std::vector<std::vector<std::uint32_t>> xs;
  std::vector<std::size_t> ys;
  std::vector<std::string> programs;
  for (const auto& r : records) {
    if (!r.platform_label) throw Error(ErrorKind::SchemaViolation, r.binary_id + ": missing platform label");
    xs.push_back(stage1_features(r, sel, cfg.seq, diags));
    ys.push_back(static_cast<std::size_t>(family_of(*r.platform_label)));
    programs.push_back(r.program_id);
  }
  const Split split = validation_split(programs, cfg.train.seed, cfg.validation_buckets);
  auto ps = m.stage1.params();
  auto loss = [&](std::size_t i, double scale) {
    learn::Tape t;
    const std::size_t s = split.train[i];
    auto l = t.cross_entropy(m.stage1.forward(t, xs[s]), ys[s], scale);
    t.backward(l);
    return t.value(l).data[0] / scale;
  };
  auto validate = [&]() -> std::optional<double> {
    if (split.validation.empty()) return std::nullopt;
    std::vector<std::string> pred, truth;
    for (std::size_t s : split.validation) {
      pred.push_back(to_string(static_cast<Family>(m.stage1.predict(xs[s]))));
      truth.push_back(to_string(static_cast<Family>(ys[s])));
    }
    return weighted_f1(pred, truth);
  };
  m.stage1_log = learn::train_minibatch(ps, split.train.size(), cfg.train, loss, validate);

  std::vector<learn::SparseVec> fx;
  std::vector<int> fy;
  for (const auto& r : records) {
    if (family_of(*r.platform_label) != Family::OpenPLC) continue;
    fx.push_back(fingerprint_features(build_fingerprint(r, sel), cfg.fingerprint_dim));
    fy.push_back(*r.platform_label == Platform::OpenPLCv3 ? 1 : 0);
  }
  if (!fx.empty()) {
    const bool has_v2 = std::count(fy.begin(), fy.end(), 0) > 0;
    const bool has_v3 = std::count(fy.begin(), fy.end(), 1) > 0;
    if (has_v2 && has_v3) {
      learn::LogisticModel lm(fingerprint_feature_dim(cfg.fingerprint_dim));
      lm.fit(fx, fy, cfg.logistic);
      m.stage2 = std::move(lm);
    } else {
      m.stage2_constant = has_v3 ? Platform::OpenPLCv3 : Platform::OpenPLCv2;
      if (diags) diags->push_back("SingleClassTraining: stage 2 predicts " + std::string(to_string(m.stage2_constant)));
    }
  } else if (diags) {
    diags->push_back("SingleClassTraining: no OpenPLC training records for stage 2");
  }
  return m;
}

struct ToolchainPrediction {
  Family family;
  Platform platform;
};

// `rec` is an unclassified record; core/runtime split happens here. When
// `truth_platform` is given it replaces the predicted platform for the split.
inline ToolchainPrediction predict_toolchain(ToolchainModel& m, const FunctionProgramRecord& rec,
                                             const CoreRules& rules, std::optional<Platform> truth_platform = {},
                                             Diagnostics* diags = nullptr) {
  const auto stage1_input =
      truth_platform ? classify(rec, *truth_platform, rules, diags) : classify_any(rec, rules, diags);
  const auto fam = static_cast<Family>(m.stage1.predict(stage1_features(stage1_input, m.selection, m.cfg.seq, diags)));
  switch (fam) {
    case Family::CODESYS: return {fam, Platform::CODESYSv3};
    case Family::GEB: return {fam, Platform::GEB};
    case Family::OpenPLC: break;
  }
  const auto split = classify(rec, truth_platform.value_or(Platform::OpenPLCv2), rules, diags);
  return {fam, stage2_predict(m, build_fingerprint(split, m.selection))};
}

inline nlohmann::ordered_json to_json(ToolchainModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["kind"] = "toolchain";
  j["selection"] = to_string(m.selection);
  j["config"] = to_json(m.cfg);
  j["stage1"] = learn::params_to_json(m.stage1.params());
  j["stage2"] = m.stage2 ? m.stage2->to_json() : nlohmann::ordered_json();
  j["stage2_constant"] = to_string(m.stage2_constant);
  return j;
}

inline void check_model_header(const nlohmann::ordered_json& j, const char* kind) {
  if (!j.is_object() || j.value("format", "") != kModelFormat)
    throw Error(ErrorKind::SchemaViolation, "/format: not a plcbinx model");
  if (j.value("version", 0) != kModelVersion)
    throw Error(ErrorKind::SchemaViolation, "/version: unsupported model version");
  if (j.value("kind", "") != kind) throw Error(ErrorKind::SchemaViolation, std::string("/kind: expected ") + kind);
}

inline FunctionSelection selection_field(const nlohmann::ordered_json& j) {
  auto s = parse_selection(j.value("selection", ""));
  if (!s) throw Error(ErrorKind::SchemaViolation, "/selection: unknown function selection");
  return *s;
}

inline ToolchainModel toolchain_from_json(const nlohmann::ordered_json& j) {
  check_model_header(j, "toolchain");
  ToolchainModel m;
  m.selection = selection_field(j);
  m.cfg = learn_config_from_json(j.at("config"));
  m.stage1 = learn::SeqClassifier(m.cfg.seq);
  learn::params_from_json(j.at("stage1"), m.stage1.params(), "/stage1");
  if (!j.at("stage2").is_null())
    m.stage2 = learn::LogisticModel::from_json(j.at("stage2"), fingerprint_feature_dim(m.cfg.fingerprint_dim),
                                               "/stage2");
  auto c = parse_platform(j.value("stage2_constant", ""));
  if (!c) throw Error(ErrorKind::SchemaViolation, "/stage2_constant: unknown platform");
  m.stage2_constant = *c;
  return m;
}

// ---- functionality ----

inline std::vector<Acfg> selected_acfgs(const FunctionProgramRecord& rec, FunctionSelection sel) {
  std::vector<Acfg> out;
  for (const auto& fn : rec.functions)
    if (selected(fn, sel)) out.push_back(build_acfg(fn));
  return out;
}

struct FunctionalityModel {
  LearnConfig cfg;
  FunctionSelection selection = FunctionSelection::Core;
  std::vector<std::string> labels;
  std::string fallback;  // majority training label
  learn::GnnClassifier gnn{learn::GnnConfig{}};
  learn::TrainLog log;
};

inline std::vector<std::string> default_functionality_labels() {
  return {kFunctionalityLabels.begin(), kFunctionalityLabels.end()};
}

inline std::string majority_label(const std::vector<std::string>& ys) {
  std::map<std::string, std::size_t> n;
  for (const auto& y : ys) ++n[y];
  std::string best;
  std::size_t bn = 0;
  for (const auto& [y, c] : n)
    if (c > bn) {
      best = y;
      bn = c;
    }
  return best;
}

inline std::string predict_functionality(FunctionalityModel& m, const FunctionProgramRecord& classified) {
  const auto graphs = selected_acfgs(classified, m.selection);
  if (graphs.empty()) return m.fallback;
  const auto batch = learn::make_batch(graphs, m.gnn.config());
  return m.labels[learn::argmax(m.gnn.logits(batch))];
}

// Training records must carry functionality labels and categories.
inline FunctionalityModel train_functionality(const std::vector<FunctionProgramRecord>& records,
                                              FunctionSelection sel, const LearnConfig& cfg,
                                              std::vector<std::string> labels = default_functionality_labels(),
                                              Diagnostics* diags = nullptr) {
  if (records.empty()) throw Error(ErrorKind::EmptyTrainingFold, "functionality training set is empty");
  FunctionalityModel m;
  m.cfg = cfg;
  m.selection = sel;
  std::vector<std::string> all_y;
  for (const auto& r : records) {
    if (!r.functionality_label) throw Error(ErrorKind::SchemaViolation, r.binary_id + ": missing functionality label");
    all_y.push_back(*r.functionality_label);
    if (std::find(labels.begin(), labels.end(), *r.functionality_label) == labels.end())
      labels.push_back(*r.functionality_label);
  }
  m.labels = labels;
  m.fallback = majority_label(all_y);
  auto gcfg = cfg.gnn;
  gcfg.classes = labels.size();
  m.gnn = learn::GnnClassifier(gcfg);

  std::vector<learn::GraphBatch> batches;
  std::vector<std::size_t> ys;
  std::vector<std::string> programs;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto graphs = selected_acfgs(records[i], sel);
    if (graphs.empty()) {
      if (diags) diags->push_back("NoFunctionsSelected: " + records[i].binary_id + " skipped for training");
      continue;
    }
    batches.push_back(learn::make_batch(graphs, gcfg));
    ys.push_back(static_cast<std::size_t>(
        std::find(labels.begin(), labels.end(), *records[i].functionality_label) - labels.begin()));
    programs.push_back(records[i].program_id);
    usable.push_back(i);
  }
  const Split split = validation_split(programs, cfg.train.seed, cfg.validation_buckets);

  std::vector<double> weight(labels.size(), 0.0);
  {
    std::vector<std::size_t> count(labels.size(), 0);
    for (std::size_t s : split.train) ++count[ys[s]];
    std::size_t present = 0;
    for (auto c : count) present += c > 0;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (count[k])
        weight[k] = static_cast<double>(split.train.size()) / (static_cast<double>(present) * static_cast<double>(count[k]));
  }

  auto ps = m.gnn.params();
  auto loss = [&](std::size_t i, double scale) {
    learn::Tape t;
    const std::size_t s = split.train[i];
    auto l = t.cross_entropy(m.gnn.forward(t, batches[s]), ys[s], scale * weight[ys[s]]);
    t.backward(l);
    return t.value(l).data[0] / scale;
  };
  auto validate = [&]() -> std::optional<double> {
    if (split.validation.empty()) return std::nullopt;
    std::vector<std::string> pred, truth;
    for (std::size_t s : split.validation) {
      pred.push_back(labels[learn::argmax(m.gnn.logits(batches[s]))]);
      truth.push_back(labels[ys[s]]);
    }
    return weighted_f1(pred, truth);
  };
  if (!batches.empty()) m.log = learn::train_minibatch(ps, split.train.size(), cfg.train, loss, validate);
  return m;
}

inline nlohmann::ordered_json to_json(FunctionalityModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["kind"] = "functionality";
  j["selection"] = to_string(m.selection);
  j["config"] = to_json(m.cfg);
  j["labels"] = m.labels;
  j["fallback"] = m.fallback;
  j["gnn"] = learn::params_to_json(m.gnn.params());
  return j;
}

inline FunctionalityModel functionality_from_json(const nlohmann::ordered_json& j) {
  check_model_header(j, "functionality");
  FunctionalityModel m;
  m.selection = selection_field(j);
  m.cfg = learn_config_from_json(j.at("config"));
  try {
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.fallback = j.at("fallback").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("/labels: ") + e.what());
  }
  auto gcfg = m.cfg.gnn;
  gcfg.classes = m.labels.size();
  m.gnn = learn::GnnClassifier(gcfg);
  learn::params_from_json(j.at("gnn"), m.gnn.params(), "/gnn");
  return m;
}

}  // namespace plcbinx
