// Acceptance runner: one PASS/FAIL line per criterion.
//
//   plcbinx-acceptance [--only 1,2,...] [--workdir DIR] [--jobs N]
//
// Exit status is 0 only when every selected criterion passes.

#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "plcbinx/cli.hpp"
#include "plcbinx/eval.hpp"
#include "plcbinx/forge/corpus.hpp"
#include "plcbinx/forge/manifest.hpp"
#include "plcbinx/learn/gnn.hpp"
#include "plcbinx/learn/seqmodel.hpp"
#include "support.hpp"

using namespace plcbinx;
using namespace plcbinx::testkit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  std::size_t jobs = 1;
  // default corpus, forged and analyzed on first use
  std::optional<std::vector<FunctionProgramRecord>> corpus;
  std::vector<EvalReport> eval_runs;

  const std::vector<FunctionProgramRecord>& default_corpus() {
    if (!corpus) {
      const fs::path dir = work / "default-corpus";
      fs::remove_all(dir);
      forge::forge_corpus(forge::ForgeSpec{}, dir, jobs);
      corpus = analyze_corpus(dir, jobs);
    }
    return *corpus;
  }
};

std::string secs(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f s", s);
  return buf;
}

std::string pct(double v) { return fmt_pct(v) + "%"; }

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
  return s;
}

// ---- 1 ----
Outcome normalization_golden(Context&) {
  const Stopwatch sw;
  std::size_t ok = 0;
  std::string bad;
  const auto cases = normalization_cases();
  for (const auto& c : cases) {
    const auto got = normalize_case(c);
    if (got == c.expected) ++ok;
    else bad += " [" + c.source + " -> " + join(got) + "]";
  }
  const double t = sw.seconds();
  return {ok == cases.size() && t < 1.0,
          std::to_string(ok) + "/" + std::to_string(cases.size()) + " rows" + bad + ", " + secs(t) + " (limit 1 s)"};
}

// ---- 2 ----
Outcome acfg_golden(Context&) {
  const Stopwatch sw;
  const Acfg g = build_acfg(acfg_fixture());
  const std::vector<std::string> want{"bb_len:9-16", "bb_in:1", "bb_out:2", "core_function"};
  const bool table_ok = g.nodes.size() == 4 && g.nodes[1].feature_tokens() == want;

  const RecoveredFunction two = two_edge_fixture();
  auto edges = two.edges;
  std::sort(edges.begin(), edges.end());
  const std::vector<CfgEdge> want_edges{{0, 1, EdgeKind::Fallthrough}, {0, 2, EdgeKind::Taken}};
  const Acfg g2 = build_acfg(two);
  const bool edge_ok = edges == want_edges && g2.edges.size() == 2 && g2.nodes[0].out_degree == 2;
  const double t = sw.seconds();
  std::string d = table_ok ? "node features " + join(want) : "node features " + (g.nodes.size() > 1 ? join(g.nodes[1].feature_tokens()) : "?");
  d += edge_ok ? "; conditional block has taken + fall-through edges" : "; 2-edge fixture mismatch";
  return {table_ok && edge_ok && t < 1.0, d + ", " + secs(t) + " (limit 1 s)"};
}

// ---- 3 ----
Outcome recovery_oracle(Context& cx) {
  const Stopwatch sw;
  const fs::path dir = cx.work / "oracle-corpus";
  fs::remove_all(dir);
  forge::ForgeSpec spec;
  spec.max_binaries = 200;
  const auto entries = forge::forge_corpus(spec, dir, cx.jobs);
  const auto rows = read_index(dir / forge::kIndexFile);
  std::vector<std::size_t> bad(rows.size(), 0);
  std::vector<std::string> first(rows.size());
  std::vector<int> is_app(rows.size(), 0);
  parallel_for(rows.size(), cx.jobs, [&](std::size_t i) {
    const auto m = read_manifest(dir, rows[i].binary_id);
    std::vector<std::string> diffs;
    try {
      const auto img = load_image(rows[i].path);
      const auto rec = recover_image(img, labels_for(rows[i]));
      is_app[i] = img.format == BinaryFormat::APP;
      forge::CompareOptions opt;
      opt.categories = false;
      opt.structure = !is_app[i];
      diffs = forge::compare_record(rec, m, opt);
      for (auto& d : forge::compare_image(img, m, is_app[i] ? 256 : 0)) diffs.push_back(d);
    } catch (const Error& e) {
      diffs.push_back(rows[i].binary_id + ": " + e.what());
    }
    bad[i] = diffs.size();
    if (!diffs.empty()) first[i] = diffs.front();
  });
  std::size_t native = 0, app = 0, native_bad = 0, app_bad = 0;
  std::string example;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (is_app[i] ? app : native) += 1;
    (is_app[i] ? app_bad : native_bad) += bad[i];
    if (example.empty() && bad[i]) example = "; first: " + first[i];
  }
  const double t = sw.seconds();
  return {entries.size() == 200 && native_bad == 0 && app_bad == 0 && t < 120,
          std::to_string(native) + " ELF/PE binaries, " + std::to_string(native_bad) + " mismatches; " +
              std::to_string(app) + " APP binaries, " + std::to_string(app_bad) + " mismatches" + example + ", " +
              secs(t) + " (limit 120 s)"};
}

// ---- 4 ----
Outcome decoder_oracle(Context&) {
  const auto rows = read_reference_fixture(fixture_dir() / "capstone_reference.tsv");
  std::size_t bad = 0;
  std::string example;
  for (const auto& r : rows) {
    const auto in = decode(r.word, r.address);
    const std::string got = in ? in->text() : "(invalid)";
    if (got != r.capstone || r.forge != r.capstone) {
      if (!bad) example = "; first: 0x" + hex_lower(r.word) + " '" + got + "' vs '" + r.capstone + "'";
      ++bad;
    }
  }
  return {rows.size() >= 500 && bad == 0,
          std::to_string(rows.size()) + " reference words, " + std::to_string(bad) + " mismatches" + example};
}

std::string invariant_note(const EvalReport& r) { return "invariants " + join(r.invariants); }

// ---- 5 ----
Outcome toolchain_direction(Context& cx) {
  const auto& recs = cx.default_corpus();
  EvalOptions opt;
  opt.task = Task::Toolchain;
  opt.selection = FunctionSelection::Runtime;
  const Stopwatch sw;
  const auto rep = run_experiment(recs, opt);
  cx.eval_runs.push_back(rep);
  const double t = sw.seconds();
  return {rep.overall.weighted_f1 == 1.0 && t < 600,
          "weighted F1 " + pct(rep.overall.weighted_f1) + " over " + std::to_string(recs.size()) + " binaries, " +
              invariant_note(rep) + ", " + secs(t) + " (limit 600 s)"};
}

// ---- 6 ----
Outcome functionality_direction(Context& cx) {
  const auto& recs = cx.default_corpus();
  const Stopwatch sw;
  std::map<FunctionSelection, EvalReport> by;
  for (auto sel : {FunctionSelection::Core, FunctionSelection::Both, FunctionSelection::Runtime}) {
    EvalOptions opt;
    opt.task = Task::Functionality;
    opt.selection = sel;
    by[sel] = run_experiment(recs, opt);
    cx.eval_runs.push_back(by[sel]);
  }
  const double t = sw.seconds();
  const double core = by[FunctionSelection::Core].overall.weighted_f1;
  const double both = by[FunctionSelection::Both].overall.weighted_f1;
  const double runtime = by[FunctionSelection::Runtime].overall.weighted_f1;
  const double baseline = by[FunctionSelection::Core].baseline.weighted_f1;
  const bool a = core >= baseline + 0.10;
  const bool b = core > both && both > runtime;
  return {a && b && t < 1800, std::string("(a) ") + (a ? "ok" : "FAILED") + ": core " + pct(core) + " vs baseline " +
                                  pct(baseline) + "; (b) " + (b ? "ok" : "FAILED") + ": core " + pct(core) + " > both " +
                                  pct(both) + " > runtime " + pct(runtime) + ", " + secs(t) + " (limit 1800 s)"};
}

// ---- 7 ----
Outcome gradient_suite(Context&) {
  const Stopwatch sw;
  GradStats st;
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng(seed * 7919);
    learn::SeqClassifierConfig sc;
    sc.vocab = 50;
    sc.embed_dim = 8;
    sc.heads = 2;
    sc.ff_dim = 12;
    sc.max_len = 12;
    sc.seed = seed;
    learn::SeqClassifier seq(sc);
    std::vector<std::uint32_t> idx;
    for (int i = 0; i < 10; ++i) idx.push_back(static_cast<std::uint32_t>(rng.below(sc.vocab)));
    const std::size_t label = seed % sc.classes;
    grad_check(seq.params(), [&](bool back) {
      learn::Tape t;
      const auto l = t.cross_entropy(seq.forward(t, idx), label);
      if (back) t.backward(l);
      return t.value(l).data[0];
    }, st, rng);

    learn::GnnConfig gc;
    gc.bag_dim = 16;
    gc.hidden = 6;
    gc.head_hidden = 5;
    gc.classes = 4;
    gc.seed = seed;
    learn::GnnClassifier gnn(gc);
    const auto batch = learn::make_batch({build_acfg(acfg_fixture()), build_acfg(two_edge_fixture())}, gc);
    grad_check(gnn.params(), [&](bool back) {
      learn::Tape t;
      const auto l = t.cross_entropy(gnn.forward(t, batch), seed % gc.classes);
      if (back) t.backward(l);
      return t.value(l).data[0];
    }, st, rng);
  }
  const double t = sw.seconds();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", st.worst);
  return {st.worst <= 1e-3 && t < 60, std::to_string(st.tensors) + " tensors, " + std::to_string(st.checked) +
                                          " entries over 3 seeds, worst rel err " + buf + " (" + st.worst_name + "), " +
                                          secs(t) + " (limit 60 s)"};
}

// ---- 8 ----
Outcome protocol_invariants(Context& cx) {
  if (cx.eval_runs.empty()) return {false, "no eval runs in this session (run with criteria 5 and 6)"};
  std::size_t full = 0;
  for (const auto& r : cx.eval_runs) {
    std::set<std::string> have(r.invariants.begin(), r.invariants.end());
    bool ok = have.contains("no-leak") && have.contains("coverage") && have.contains("weighted-identity");
    if (r.task == Task::Toolchain) ok = ok && have.contains("hierarchical-consistency");
    full += ok;
  }
  return {full == cx.eval_runs.size(), std::to_string(full) + "/" + std::to_string(cx.eval_runs.size()) +
                                           " eval runs completed with every applicable invariant checked, 0 failures"};
}

// ---- 9 ----
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return files;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "plc-binx");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism(Context& cx) {
  const Stopwatch sw;
  const fs::path root = cx.work / "determinism";
  const std::string corpus = (root / "corpus").string(), flif = (root / "flif").string();
  const std::string train = (root / "train.json").string();
  std::vector<std::pair<std::string, std::vector<std::string>>> steps{
      {"forge", {"forge", "--out", corpus, "--max-binaries", "24", "--seed", "5"}},
      {"analyze", {"analyze", corpus + "/corpus-index.tsv", "--out", flif}},
      {"represent", {"represent", flif}},
      {"train-toolchain", {"train-toolchain", flif, "--train", train, "--out", (root / "tc").string()}},
      {"train-functionality", {"train-functionality", flif, "--train", train, "--out", (root / "fn").string()}},
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(root);
    fs::create_directories(root);
    write_atomic(root / "train.json", std::string(R"({"train": {"epochs": 3}})"));
    for (auto& [name, args] : steps)
      if (cli(args) != 0) return {false, name + " failed on run " + std::to_string(run + 1)};
    runs.push_back(snapshot(root));
  }
  std::vector<std::string> differ;
  for (const auto& [name, body] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != body) differ.push_back(name);
  }
  if (runs[0].size() != runs[1].size()) differ.push_back("(file sets differ)");
  const double t = sw.seconds();
  return {differ.empty(), std::to_string(runs[0].size()) + " files from 5 commands byte-identical across 2 runs" +
                              (differ.empty() ? "" : "; differing: " + differ.front()) + ", " + secs(t)};
}

// ---- 10 ----
Outcome core_distribution(Context& cx) {
  const auto rules = default_core_rules();
  std::vector<FunctionProgramRecord> recs;
  for (const auto& r : cx.default_corpus()) recs.push_back(classify(r, *r.platform_label, rules));
  const auto rows = distribution_stats(recs);
  bool ok = rows.size() == std::size(kAllPlatforms);
  std::string d;
  for (const auto& r : rows) {
    ok = ok && r.core_per_binary >= 2.0 && r.core_per_binary <= 4.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s %.2f", to_string(r.platform), r.core_per_binary);
    d += (d.empty() ? "" : ", ") + std::string(buf);
  }
  return {ok, "core per binary: " + d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plc-binx acceptance runner"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "plcbinx-acceptance").string();
  std::size_t jobs = 1;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--workdir", work, "Scratch directory")->capture_default_str();
  app.add_option("--jobs", jobs, "Parallel workers for per-binary stages")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  Context cx;
  cx.work = work;
  cx.jobs = jobs;
  fs::create_directories(cx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"normalization golden", normalization_golden},
      {"ACFG golden", acfg_golden},
      {"recovery oracle", recovery_oracle},
      {"decoder oracle", decoder_oracle},
      {"toolchain direction", toolchain_direction},
      {"functionality direction", functionality_direction},
      {"gradient suite", gradient_suite},
      {"protocol invariants", protocol_invariants},
      {"determinism", determinism},
      {"core distribution", core_distribution},
  };
  std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  std::string summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second(cx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    const std::string line =
        std::string(o.pass ? "PASS" : "FAIL") + "  criterion " + std::to_string(n) + " (" + criteria[i].first + "): " + o.detail;
    std::cout << line << std::endl;
    summary += line + "\n";
  }
  write_atomic(cx.work / "summary.txt", summary);
  return failed ? 1 : 0;
}
