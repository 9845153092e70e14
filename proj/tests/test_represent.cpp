#include <gtest/gtest.h>

#include <regex>

#include "plcbinx/corefn.hpp"
#include "plcbinx/represent.hpp"
#include "support.hpp"

using namespace plcbinx;
using namespace plcbinx::arm;

namespace {

std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '[' || c == '{') ++depth;
    if (c == ']' || c == '}') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
      continue;
    }
    if (c == ' ' && cur.empty()) continue;
    cur.push_back(c);
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Text-level normalization of a manifest instruction, using the manifest's
// own call-site list for control transfers.
std::vector<std::string> oracle_tokens(const forge::ManifestInstr& in, const forge::ManifestFunction& fn) {
  const auto sp = in.text.find(' ');
  const std::string mn = in.text.substr(0, sp);
  const std::string ops = sp == std::string::npos ? "" : in.text.substr(sp + 1);
  for (const auto& c : fn.calls)
    if (c.at == in.addr) {
      if (c.kind == CallKind::Indirect) return {mn, "call_indirect"};
      std::vector<std::string> t{mn};
      if (c.kind == CallKind::DirectResolved) t.push_back("call_name:" + c.name);
      else if (!c.tail) t.push_back("call_addr");
      return t;
    }
  static const std::regex branch("b(eq|ne|hs|lo|mi|pl|vs|vc|hi|ls|ge|lt|gt|le)?");
  if (std::regex_match(mn, branch)) return {mn};
  const auto operands = split_operands(ops);
  const bool writes_pc = (mn.starts_with("mov") && !operands.empty() && operands[0] == "pc") ||
                         (mn.starts_with("pop") && ops.find("pc") != std::string::npos) || mn.starts_with("bx");
  if (writes_pc) return {mn};
  std::vector<std::string> t{mn};
  for (const auto& o : operands) {
    if (o.starts_with("[")) t.push_back("mem");
    else if (o.starts_with("#")) t.push_back("imm");
    else if (o.starts_with("{")) {
      for (std::size_t k = 0; k < split_operands(o.substr(1, o.size() - 2)).size(); ++k) t.push_back("reg");
    } else t.push_back("reg");
  }
  return t;
}

std::uint64_t reference_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

TEST(Normalize, GoldenRows) {
  for (const auto& c : testkit::normalization_cases()) EXPECT_EQ(testkit::normalize_case(c), c.expected) << c.source;
}

TEST(Normalize, OperandValueInvariant) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const unsigned a = rng.below(13), b = rng.below(13), c = rng.below(13);
    const std::uint32_t imm = rng.below(256);
    const auto r1 = normalize(*decode(dp_reg(DpOp::Add, a, b, c), 0));
    const auto r2 = normalize(*decode(dp_reg(DpOp::Add, c, a, b), 0));
    EXPECT_EQ(r1, r2);
    const auto i1 = normalize(*decode(dp_imm(DpOp::Sub, a, b, imm), 0));
    const auto i2 = normalize(*decode(dp_imm(DpOp::Sub, b, c, (imm * 7) % 256), 0));
    EXPECT_EQ(i1, i2);
    const auto m1 = normalize(*decode(ldst(true, false, a, b, static_cast<int>(imm)), 0));
    const auto m2 = normalize(*decode(ldst(true, false, c, a, -static_cast<int>(imm)), 0));
    EXPECT_EQ(m1, m2);
  }
}

TEST(Normalize, CallNameSensitive) {
  const auto in = *decode(branch(0x1000, 0x2000, true), 0x1000);
  auto named = [&](std::string n) {
    return normalize(in, [n](std::uint64_t) -> std::optional<std::string> { return n; });
  };
  const auto a = named("TON"), b = named("TOF");
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a[0], b[0]);
  EXPECT_NE(a[1], b[1]);
  EXPECT_EQ(normalize(in), (std::vector<std::string>{"bl", "call_addr"}));
}

TEST(Normalize, SpecialForms) {
  EXPECT_EQ(normalize(make_undef(0xF0000000u, 0)), std::vector<std::string>{"undef"});
  EXPECT_EQ(normalize(*decode(bx(kLr), 0)), std::vector<std::string>{"bx"});
  EXPECT_EQ(normalize(*decode(bx(kR2), 0)), (std::vector<std::string>{"bx", "call_indirect"}));
  EXPECT_EQ(normalize(*decode(branch(0, 0x40, false, 0x0), 0)), std::vector<std::string>{"beq"});
  EXPECT_EQ(normalize(*decode(push(regs({kR4, kR5, kLr})), 0)), (std::vector<std::string>{"push", "reg", "reg", "reg"}));
}

TEST(TokenSeq, MatchesManifestOracle) {
  std::size_t functions = 0;
  for (const auto& rec : testkit::small_records()) {
    const auto m = testkit::read_manifest(testkit::small_corpus(), rec.binary_id);
    std::map<std::uint64_t, const forge::ManifestFunction*> by_entry;
    for (const auto& f : m.functions) by_entry[f.entry] = &f;
    for (const auto& fn : rec.functions) {
      const auto* mf = by_entry.at(fn.entry);
      std::vector<std::string> want;
      for (const auto& in : mf->instructions) {
        auto t = oracle_tokens(in, *mf);
        want.insert(want.end(), t.begin(), t.end());
      }
      EXPECT_EQ(build_token_seq(fn).tokens, want) << rec.binary_id << " " << fn.id;
      ++functions;
    }
  }
  EXPECT_GT(functions, 1000u);
}

TEST(Hash, ReferenceValues) {
  EXPECT_EQ(hash_tokens({}), 0xcbf29ce484222325ull);
  EXPECT_EQ(hash_tokens({"bx"}), 0x08a64c07b54dfa87ull);
  EXPECT_EQ(hash_tokens({"mov", "reg", "reg"}), 0xc102b8977b6ed819ull);
  EXPECT_EQ(hash_tokens({"mov", "reg", "reg"}), reference_fnv("mov\nreg\nreg"));
}

TEST(Hash, DistinctSequencesOnCorpus) {
  std::map<std::uint64_t, std::vector<std::string>> seen;
  std::size_t collisions = 0;
  for (const auto& rec : testkit::small_records())
    for (const auto& fn : rec.functions) {
      const auto seq = build_token_seq(fn);
      const auto h = hash_function(seq);
      auto [it, fresh] = seen.emplace(h, seq.tokens);
      if (!fresh && it->second != seq.tokens) ++collisions;
    }
  EXPECT_EQ(collisions, 0u);
}

TEST(Acfg, GoldenNodeFeatures) {
  const auto g = build_acfg(testkit::acfg_fixture());
  ASSERT_EQ(g.nodes.size(), 4u);
  EXPECT_EQ(g.nodes[1].feature_tokens(),
            (std::vector<std::string>{"bb_len:9-16", "bb_in:1", "bb_out:2", "core_function"}));
  EXPECT_EQ(g.nodes[3].feature_tokens(),
            (std::vector<std::string>{"bb_len:1-2", "bb_in:3", "bb_out:0", "core_function"}));
}

TEST(Acfg, ConditionalBranchHasTargetAndFallthrough) {
  const auto fn = testkit::two_edge_fixture();
  const auto g = build_acfg(fn);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.nodes[0].out_degree, 2u);
  std::set<EdgeKind> kinds;
  for (const auto& e : fn.edges) kinds.insert(e.kind);
  EXPECT_EQ(kinds, (std::set<EdgeKind>{EdgeKind::Taken, EdgeKind::Fallthrough}));
  EXPECT_EQ(g.nodes[1].out_degree, 0u);
}

TEST(Acfg, StraightLine) {
  const auto g = build_acfg(testkit::function_from_words(0x40, {mov_reg(kR0, kR1), bx(kLr)}));
  ASSERT_EQ(g.nodes.size(), 1u);
  EXPECT_TRUE(g.edges.empty());
  EXPECT_EQ(g.nodes[0].in_degree, 0u);
  EXPECT_EQ(g.nodes[0].out_degree, 0u);
  EXPECT_EQ(g.nodes[0].feature_tokens().back(), "runtime_function");
}

TEST(Acfg, StructureIgnoresOperands) {
  auto a = testkit::acfg_fixture();
  for (auto& in : a.instructions) in.operands.clear();
  const auto g1 = build_acfg(testkit::acfg_fixture()), g2 = build_acfg(a);
  EXPECT_EQ(g1.edges, g2.edges);
  ASSERT_EQ(g1.nodes.size(), g2.nodes.size());
  for (std::size_t i = 0; i < g1.nodes.size(); ++i) EXPECT_EQ(g1.nodes[i].feature_tokens(), g2.nodes[i].feature_tokens());
}

TEST(Acfg, ManifestDegrees) {
  for (const auto& rec : testkit::small_records()) {
    const auto m = testkit::read_manifest(testkit::small_corpus(), rec.binary_id);
    for (std::size_t i = 0; i < rec.functions.size(); ++i) {
      const auto g = build_acfg(rec.functions[i]);
      const auto& mf = m.functions[i];
      ASSERT_EQ(mf.entry, rec.functions[i].entry);
      ASSERT_EQ(g.nodes.size(), mf.blocks.size());
      std::vector<std::uint32_t> in(mf.blocks.size()), out(mf.blocks.size());
      for (const auto& e : mf.edges) {
        ++out[e.src];
        ++in[e.dst];
      }
      for (std::size_t b = 0; b < g.nodes.size(); ++b) {
        EXPECT_EQ(g.nodes[b].in_degree, in[b]);
        EXPECT_EQ(g.nodes[b].out_degree, out[b]);
        EXPECT_EQ(g.nodes[b].bb_len, bb_len_bucket(mf.blocks[b].second));
      }
    }
  }
}

TEST(Fingerprint, RuntimeOnlyAndCounted) {
  const auto rules = default_core_rules();
  for (const auto& raw : testkit::small_records()) {
    const auto rec = classify(raw, *raw.platform_label, rules);
    const auto fp = build_fingerprint(rec);
    std::uint32_t sum = 0;
    for (auto c : fp.size_histogram) sum += c;
    EXPECT_EQ(sum, fp.runtime_count);
    std::size_t runtime = 0;
    for (const auto& f : rec.functions) runtime += f.category == Category::Runtime;
    EXPECT_EQ(fp.runtime_count, runtime);
  }
  FunctionProgramRecord empty;
  const auto fp = build_fingerprint(empty);
  EXPECT_EQ(fp.runtime_count, 0u);
  EXPECT_TRUE(fp.function_hashes.empty());
}

TEST(Fingerprint, OpenPlcV2NameTokens) {
  const auto rules = default_core_rules();
  bool found = false;
  for (const auto& raw : testkit::small_records()) {
    if (raw.platform_label != Platform::OpenPLCv2) continue;
    const auto fp = build_fingerprint(classify(raw, Platform::OpenPLCv2, rules));
    found = found || (fp.name_tokens.contains("wiring") && fp.name_tokens.contains("pi"));
  }
  EXPECT_TRUE(found);
}

TEST(Fingerprint, IdentifierSplitting) {
  EXPECT_EQ(split_identifier("wiringPiSetup"), (std::vector<std::string>{"wiring", "pi", "setup"}));
  EXPECT_EQ(split_identifier("__aeabi_uidiv"), (std::vector<std::string>{"aeabi", "uidiv"}));
  EXPECT_EQ(split_identifier("HTTPServer_v2"), (std::vector<std::string>{"http", "server", "v2"}));
  EXPECT_EQ(size_bucket(16), 0u);
  EXPECT_EQ(size_bucket(17), 1u);
  EXPECT_EQ(size_bucket(1025), kSizeHistogramBuckets - 1);
}
