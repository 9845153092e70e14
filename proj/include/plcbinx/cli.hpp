#pragma once

// The plc-binx command line: one subcommand per pipeline stage. Exit codes:
// 0 success, 1 invariant or processing failure, 2 usage error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "plcbinx/corefn.hpp"
#include "plcbinx/eval.hpp"
#include "plcbinx/flif.hpp"
#include "plcbinx/forge/corpus.hpp"
#include "plcbinx/io.hpp"
#include "plcbinx/models.hpp"
#include "plcbinx/pipeline.hpp"
#include "plcbinx/represent.hpp"

namespace plcbinx::cli {

using ojson = nlohmann::ordered_json;

inline constexpr int kExitOk = 0, kExitFailure = 1, kExitUsage = 2;
inline constexpr const char* kFlifSuffix = ".flif.json";
inline constexpr const char* kReprSuffix = ".repr.json";

struct RunConfig {
  std::vector<std::string> inputs;
  std::string out;
  std::string rules;  // empty: built-in defaults
  std::string train;  // empty: built-in defaults
  std::uint64_t seed = 1;
  std::string functions;  // empty: the subcommand's default selection
  std::string peers;
  std::string format;
  std::size_t jobs = 1;
  // subcommand specific
  std::uint32_t programs_per_label = 8;
  std::size_t max_binaries = 0;
  std::string platform;
  std::string model;
  std::string task = "toolchain";
  std::optional<std::uint64_t> fold_seed;
};

inline ojson to_json(const RunConfig& c, const std::string& command) {
  ojson j;
  j["command"] = command;
  j["inputs"] = c.inputs;
  j["out"] = c.out;
  j["rules"] = c.rules.empty() ? ojson(nullptr) : ojson(c.rules);
  j["train"] = c.train.empty() ? ojson(nullptr) : ojson(c.train);
  j["seed"] = c.seed;
  j["functions"] = c.functions.empty() ? ojson(nullptr) : ojson(c.functions);
  j["peers"] = c.peers.empty() ? ojson(nullptr) : ojson(c.peers);
  j["format"] = c.format.empty() ? ojson(nullptr) : ojson(c.format);
  j["jobs"] = c.jobs;
  return j;
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- input handling ----

struct LoadedRecord {
  FunctionProgramRecord record;
  fs::path source;
};

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string stem_id(const fs::path& p) {
  std::string name = p.filename().string();
  if (ends_with(name, kFlifSuffix)) return name.substr(0, name.size() - std::string_view(kFlifSuffix).size());
  return p.stem().string();
}

inline LoadOptions load_options(const RunConfig& c) {
  LoadOptions o;
  if (!c.peers.empty()) o.peers_dir = fs::path(c.peers);
  if (!c.format.empty()) {
    if (c.format == "elf") o.format = BinaryFormat::ELF;
    else if (c.format == "pe") o.format = BinaryFormat::PE;
    else if (c.format == "app") o.format = BinaryFormat::APP;
    else throw UsageError("--format must be elf, pe or app");
  }
  return o;
}

inline FunctionProgramRecord read_flif(const fs::path& p) { return import_flif(read_text(p)); }

// Inputs may be corpus index files, FLIF files, directories of FLIF files or
// raw binaries. Unreadable items are skipped with one stderr line each.
inline std::vector<LoadedRecord> load_records(const RunConfig& c, std::ostream& err) {
  if (c.inputs.empty()) throw UsageError("no inputs given");
  const LoadOptions lopt = load_options(c);
  struct Job {
    fs::path path;
    std::optional<RecordLabels> labels;
    bool flif;
  };
  std::vector<Job> jobs;
  for (const auto& in : c.inputs) {
    const fs::path p(in);
    if (!fs::exists(p)) throw UsageError("input not found: " + in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && ends_with(e.path().filename().string(), kFlifSuffix)) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      for (auto& f : found) jobs.push_back({f, std::nullopt, true});
    } else if (p.extension() == ".tsv") {
      for (const auto& row : read_index(p))
        jobs.push_back({row.path, labels_for(row), ends_with(row.path.string(), ".json")});
    } else {
      jobs.push_back({p, std::nullopt, p.extension() == ".json"});
    }
  }
  std::vector<std::optional<LoadedRecord>> out(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), c.jobs, [&](std::size_t i) {
    const Job& j = jobs[i];
    try {
      FunctionProgramRecord rec;
      if (j.flif) {
        rec = read_flif(j.path);
        if (j.labels) {
          if (!rec.platform_label) rec.platform_label = j.labels->platform;
          if (!rec.functionality_label) rec.functionality_label = j.labels->functionality;
        }
      } else {
        rec = analyze_file(j.path, j.labels.value_or(RecordLabels{stem_id(j.path), stem_id(j.path), {}, {}}), lopt);
      }
      out[i] = LoadedRecord{std::move(rec), j.path};
    } catch (const Error& e) {
      errors[i] = j.path.string() + ": skipped: " + to_string(e.kind()) + ": " + e.what();
    }
  });
  std::vector<LoadedRecord> recs;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) err << errors[i] << "\n";
    if (out[i]) recs.push_back(std::move(*out[i]));
  }
  return recs;
}

inline CoreRules load_rules(const RunConfig& c) {
  if (c.rules.empty()) return default_core_rules();
  return rules_from_json(ojson::parse(read_text(c.rules)));
}

inline LearnConfig load_learn(const RunConfig& c) {
  LearnConfig cfg = c.train.empty() ? LearnConfig{} : learn_config_from_json(ojson::parse(read_text(c.train)));
  return cfg.with_seed(c.seed);
}

inline FunctionSelection selection_or(const RunConfig& c, FunctionSelection dflt) {
  if (c.functions.empty()) return dflt;
  auto s = parse_selection(c.functions);
  if (!s) throw UsageError("--functions must be core, runtime or both");
  return *s;
}

inline bool is_classified(const FunctionProgramRecord& r) {
  return std::none_of(r.functions.begin(), r.functions.end(),
                      [](const RecoveredFunction& f) { return f.category == Category::Unassigned; });
}

// Core/runtime split from the first available source: an explicit platform,
// existing categories, the platform label, or every rule set at once.
inline FunctionProgramRecord ensure_classified(FunctionProgramRecord r, const CoreRules& rules,
                                               std::optional<Platform> platform, Diagnostics* diags) {
  if (platform) return classify(std::move(r), *platform, rules, diags);
  if (is_classified(r) && !r.functions.empty()) return r;
  if (r.platform_label) return classify(std::move(r), *r.platform_label, rules, diags);
  return classify_any(std::move(r), rules, diags);
}

inline void flush_diags(Diagnostics& d, std::ostream& err) {
  for (const auto& line : d) err << line << "\n";
  d.clear();
}

inline fs::path require_out(const RunConfig& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  return fs::path(c.out);
}

inline void write_run_json(const fs::path& dir, const RunConfig& c, const std::string& command, ojson extra = {}) {
  ojson j = to_json(c, command);
  if (!extra.is_null())
    for (auto& [k, v] : extra.items()) j[k] = v;
  write_atomic(dir / "run.json", j.dump(2) + "\n");
}

// ---- subcommands ----

inline int cmd_forge(const RunConfig& c, std::ostream& out, std::ostream&) {
  const fs::path dir = require_out(c);
  forge::ForgeSpec spec;
  spec.seed = c.seed;
  spec.programs_per_label = c.programs_per_label;
  spec.max_binaries = c.max_binaries;
  const auto entries = forge::forge_corpus(spec, dir, c.jobs);
  write_run_json(dir, c, "forge", {{"forge", forge::to_json(spec)}});
  out << "forged " << entries.size() << " binaries into " << dir.string() << "\n";
  return kExitOk;
}

inline std::string index_line(const FunctionProgramRecord& r, const std::string& path) {
  return r.binary_id + "\t" + r.program_id + "\t" + (r.platform_label ? to_string(*r.platform_label) : "") + "\t" +
         r.functionality_label.value_or("") + "\t" + path + "\n";
}

inline int write_records(const std::vector<LoadedRecord>& recs, const fs::path& dir) {
  std::string index = "binary_id\tprogram_id\tplatform\tlabel\tpath\n";
  for (const auto& r : recs) {
    const std::string name = r.record.binary_id + kFlifSuffix;
    write_atomic(dir / name, export_flif(r.record));
    index += index_line(r.record, name);
  }
  write_atomic(dir / "flif-index.tsv", index);
  return static_cast<int>(recs.size());
}

inline int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c);
  const auto recs = load_records(c, err);
  const int n = write_records(recs, dir);
  write_run_json(dir, c, "analyze");
  out << "analyzed " << n << " binaries\n";
  return kExitOk;
}

inline std::optional<Platform> platform_flag(const RunConfig& c) {
  if (c.platform.empty()) return std::nullopt;
  auto p = parse_platform(c.platform);
  if (!p) throw UsageError("unknown platform '" + c.platform + "'");
  return p;
}

inline int cmd_classify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c);
  const auto rules = load_rules(c);
  const auto platform = platform_flag(c);
  auto recs = load_records(c, err);
  Diagnostics d;
  for (auto& r : recs) {
    if (!platform && !r.record.platform_label) {
      r.record = classify_any(std::move(r.record), rules, &d);
    } else {
      r.record = classify(std::move(r.record), platform.value_or(*r.record.platform_label), rules, &d);
    }
  }
  flush_diags(d, err);
  const int n = write_records(recs, dir);
  write_run_json(dir, c, "classify-core", {{"rules_effective", rules_to_json(rules)}});
  out << "classified " << n << " records\n";
  return kExitOk;
}

inline int cmd_represent(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto rules = load_rules(c);
  auto recs = load_records(c, err);
  Diagnostics d;
  std::set<fs::path> dirs;
  for (auto& r : recs) {
    r.record = ensure_classified(std::move(r.record), rules, std::nullopt, &d);
    const fs::path dir = c.out.empty() ? r.source.parent_path() : fs::path(c.out);
    write_atomic(dir / (r.record.binary_id + kReprSuffix),
                 representation_to_json(build_representation(r.record), r.record).dump() + "\n");
    dirs.insert(dir);
  }
  flush_diags(d, err);
  for (const auto& dir : dirs) write_run_json(dir, c, "represent");
  out << "represented " << recs.size() << " records\n";
  return kExitOk;
}

inline int cmd_stats(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto rules = load_rules(c);
  auto loaded = load_records(c, err);
  Diagnostics d;
  std::vector<FunctionProgramRecord> recs;
  for (auto& r : loaded) {
    if (!r.record.platform_label) {
      err << r.record.binary_id << ": skipped: no platform label\n";
      continue;
    }
    recs.push_back(ensure_classified(std::move(r.record), rules, std::nullopt, &d));
  }
  flush_diags(d, err);
  const std::string tsv = distribution_tsv(distribution_stats(recs));
  if (!c.out.empty()) {
    write_atomic(fs::path(c.out) / "stats.tsv", tsv);
    write_run_json(c.out, c, "stats");
  }
  out << tsv;
  return kExitOk;
}

inline std::vector<FunctionProgramRecord> labeled_records(const RunConfig& c, const CoreRules& rules, bool need_function,
                                                          std::ostream& err) {
  auto loaded = load_records(c, err);
  Diagnostics d;
  std::vector<FunctionProgramRecord> recs;
  for (auto& r : loaded) {
    if (!r.record.platform_label || (need_function && !r.record.functionality_label)) {
      err << r.record.binary_id << ": skipped: missing labels\n";
      continue;
    }
    recs.push_back(classify(std::move(r.record), *r.record.platform_label, rules, &d));
  }
  flush_diags(d, err);
  if (recs.empty()) throw Error(ErrorKind::EmptyTrainingFold, "no labeled records to train on");
  return recs;
}

inline int cmd_train_toolchain(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c);
  const auto rules = load_rules(c);
  const auto cfg = load_learn(c);
  const auto sel = selection_or(c, FunctionSelection::Runtime);
  const auto recs = labeled_records(c, rules, false, err);
  Diagnostics d;
  auto model = train_toolchain(recs, sel, cfg, &d);
  flush_diags(d, err);
  write_atomic(dir / "toolchain-model.json", to_json(model).dump() + "\n");
  write_run_json(dir, c, "train-toolchain", {{"learn", to_json(cfg)}});
  out << "trained toolchain model on " << recs.size() << " records (epoch " << model.stage1_log.selected_epoch
      << " selected)\n";
  return kExitOk;
}

inline int cmd_train_functionality(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c);
  const auto rules = load_rules(c);
  const auto cfg = load_learn(c);
  const auto sel = selection_or(c, FunctionSelection::Core);
  const auto recs = labeled_records(c, rules, true, err);
  Diagnostics d;
  auto model = train_functionality(recs, sel, cfg, default_functionality_labels(), &d);
  flush_diags(d, err);
  write_atomic(dir / "functionality-model.json", to_json(model).dump() + "\n");
  write_run_json(dir, c, "train-functionality", {{"learn", to_json(cfg)}});
  out << "trained functionality model on " << recs.size() << " records (epoch " << model.log.selected_epoch
      << " selected)\n";
  return kExitOk;
}

inline int cmd_predict(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.model.empty()) throw UsageError("--model is required");
  const auto rules = load_rules(c);
  const ojson mj = ojson::parse(read_text(c.model));
  const std::string kind = mj.is_object() ? mj.value("kind", "") : "";
  auto recs = load_records(c, err);
  Diagnostics d;
  std::string tsv;
  if (kind == "toolchain") {
    auto m = toolchain_from_json(mj);
    tsv = "binary_id\tfamily\tplatform\n";
    for (const auto& r : recs) {
      const auto p = predict_toolchain(m, r.record, rules, std::nullopt, &d);
      tsv += r.record.binary_id + "\t" + to_string(p.family) + "\t" + to_string(p.platform) + "\n";
    }
  } else if (kind == "functionality") {
    auto m = functionality_from_json(mj);
    tsv = "binary_id\tlabel\n";
    for (auto& r : recs) {
      const auto classified = ensure_classified(std::move(r.record), rules, platform_flag(c), &d);
      tsv += classified.binary_id + "\t" + predict_functionality(m, classified) + "\n";
    }
  } else {
    check_model_header(mj, "toolchain");
  }
  flush_diags(d, err);
  if (!c.out.empty()) {
    write_atomic(fs::path(c.out) / "predictions.tsv", tsv);
    write_run_json(c.out, c, "predict", {{"model", c.model}});
  }
  out << tsv;
  return kExitOk;
}

inline int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto task = parse_task(c.task);
  if (!task) throw UsageError("--task must be toolchain or functionality");
  EvalOptions opt;
  opt.task = *task;
  opt.selection = selection_or(c, *task == Task::Toolchain ? FunctionSelection::Runtime : FunctionSelection::Core);
  opt.learn = load_learn(c);
  opt.rules = load_rules(c);
  opt.fold_seed = c.fold_seed;
  std::vector<FunctionProgramRecord> recs;
  for (auto& r : load_records(c, err)) {
    if (!r.record.platform_label || (*task == Task::Functionality && !r.record.functionality_label)) {
      err << r.record.binary_id << ": skipped: missing labels\n";
      continue;
    }
    recs.push_back(std::move(r.record));
  }
  Diagnostics d;
  const EvalReport rep = run_experiment(recs, opt, &d);
  if (!c.out.empty()) {
    const fs::path dir(c.out);
    write_atomic(dir / "report.tsv", report_tsv(rep));
    write_atomic(dir / "platforms.tsv", platform_tsv(rep));
    write_atomic(dir / "report.json", to_json(rep).dump(2) + "\n");
    for (std::size_t k = 0; k < rep.per_fold.size(); ++k)
      write_atomic(dir / "folds" / ("fold-" + std::to_string(k) + ".json"), to_json(rep.per_fold[k]).dump(2) + "\n");
    write_run_json(dir, c, "eval", {{"task", c.task}, {"learn", to_json(opt.learn)}});
  }
  out << report_tsv(rep);
  err << "invariants held: ";
  for (std::size_t i = 0; i < rep.invariants.size(); ++i) err << (i ? ", " : "") << rep.invariants[i];
  err << "\n";
  return kExitOk;
}

inline int cmd_import_flif(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c);
  std::vector<LoadedRecord> recs;
  for (const auto& in : c.inputs) {
    try {
      recs.push_back({read_flif(in), in});
    } catch (const Error& e) {
      err << in << ": rejected: " << to_string(e.kind()) << ": " << e.what() << "\n";
    }
  }
  const int n = write_records(recs, dir);
  write_run_json(dir, c, "import-flif");
  out << "imported " << n << " of " << c.inputs.size() << " records\n";
  return n == static_cast<int>(c.inputs.size()) ? kExitOk : kExitFailure;
}

// ---- entry point ----

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"plc-binx: PLC binary analysis pipeline", "plc-binx"};
  app.require_subcommand(1);
  RunConfig c;

  auto add_common = [&](CLI::App* s, bool inputs_required) {
    auto* in = s->add_option("inputs", c.inputs, "Index TSV, FLIF files, FLIF directories or binaries");
    if (inputs_required) in->required();
    s->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    s->add_option("--jobs", c.jobs, "Parallel workers for per-binary stages")->capture_default_str();
    s->add_option("--peers", c.peers, "Peer directory for container probing (default: the input's directory)");
    s->add_option("--format", c.format, "Force container format: elf, pe or app");
    s->add_option("--rules", c.rules, "Core rule sets (rules.json; default: built in)");
  };
  auto add_learn = [&](CLI::App* s) {
    s->add_option("--train", c.train, "Learning configuration (train.json; default: built in)");
    s->add_option("--functions", c.functions, "Function selection: core, runtime or both");
  };

  std::vector<std::pair<CLI::App*, int (*)(const RunConfig&, std::ostream&, std::ostream&)>> cmds;

  auto* forge = app.add_subcommand("forge", "Generate a synthetic corpus with manifests and an index");
  forge->add_option("--out", c.out, "Output directory")->required();
  forge->add_option("--seed", c.seed, "Corpus seed")->capture_default_str();
  forge->add_option("--jobs", c.jobs, "Parallel workers")->capture_default_str();
  forge->add_option("--programs-per-label", c.programs_per_label, "Programs per functionality label")
      ->capture_default_str();
  forge->add_option("--max-binaries", c.max_binaries, "Truncate the plan (0 keeps all)")->capture_default_str();
  cmds.push_back({forge, cmd_forge});

  auto* analyze = app.add_subcommand("analyze", "Load and recover binaries into FLIF records");
  add_common(analyze, true);
  analyze->add_option("--out", c.out, "Output directory")->required();
  cmds.push_back({analyze, cmd_analyze});

  auto* classify_cmd = app.add_subcommand("classify-core", "Split recovered functions into core and runtime");
  add_common(classify_cmd, true);
  classify_cmd->add_option("--out", c.out, "Output directory")->required();
  classify_cmd->add_option("--platform", c.platform, "Platform rule set (default: the record's label)");
  cmds.push_back({classify_cmd, cmd_classify});

  auto* represent = app.add_subcommand("represent", "Write token sequences, ACFGs and fingerprints");
  add_common(represent, true);
  represent->add_option("--out", c.out, "Output directory (default: next to each FLIF file)");
  cmds.push_back({represent, cmd_represent});

  auto* stats = app.add_subcommand("stats", "Core/runtime distribution per platform as TSV");
  add_common(stats, true);
  stats->add_option("--out", c.out, "Also write stats.tsv here");
  cmds.push_back({stats, cmd_stats});

  auto* ttc = app.add_subcommand("train-toolchain", "Train the two-stage toolchain model");
  add_common(ttc, true);
  add_learn(ttc);
  ttc->add_option("--out", c.out, "Output directory")->required();
  cmds.push_back({ttc, cmd_train_toolchain});

  auto* tfn = app.add_subcommand("train-functionality", "Train the graph functionality model");
  add_common(tfn, true);
  add_learn(tfn);
  tfn->add_option("--out", c.out, "Output directory")->required();
  cmds.push_back({tfn, cmd_train_functionality});

  auto* predict = app.add_subcommand("predict", "Apply a trained model");
  add_common(predict, true);
  predict->add_option("--model", c.model, "Model JSON")->required();
  predict->add_option("--platform", c.platform, "Platform for the core split (functionality models)");
  predict->add_option("--out", c.out, "Also write predictions.tsv here");
  cmds.push_back({predict, cmd_predict});

  auto* eval = app.add_subcommand("eval", "Ten-fold program-level cross-validation");
  add_common(eval, true);
  add_learn(eval);
  eval->add_option("--task", c.task, "toolchain or functionality")->capture_default_str();
  eval->add_option("--fold-seed", c.fold_seed, "Seeded fold assignment (default: unseeded)");
  eval->add_option("--out", c.out, "Report directory");
  cmds.push_back({eval, cmd_eval});

  auto* import = app.add_subcommand("import-flif", "Validate and normalize externally produced FLIF files");
  import->add_option("inputs", c.inputs, "FLIF JSON files")->required();
  import->add_option("--out", c.out, "Output directory")->required();
  cmds.push_back({import, cmd_import_flif});

  auto print_help = [&](std::ostream& os) {
    for (auto& [sub, fn] : cmds)
      if (sub->parsed()) {
        os << sub->help();
        return;
      }
    os << app.help();
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    print_help(out);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    print_help(err);
    return kExitUsage;
  }

  for (auto& [sub, fn] : cmds) {
    if (!sub->parsed()) continue;
    try {
      return fn(c, out, err);
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << "\n" << sub->help();
      return kExitUsage;
    } catch (const Error& e) {
      err << to_string(e.kind()) << ": " << e.what() << "\n";
      if (e.kind() == ErrorKind::Usage) {
        err << sub->help();
        return kExitUsage;
      }
      return kExitFailure;
    } catch (const nlohmann::json::exception& e) {
      err << "SchemaViolation: " << e.what() << "\n";
      return kExitFailure;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitFailure;
    }
  }
  print_help(err);
  return kExitUsage;
}

}  // namespace plcbinx::cli
