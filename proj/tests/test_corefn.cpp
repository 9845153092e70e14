#include <gtest/gtest.h>

#include "plcbinx/corefn.hpp"
#include "plcbinx/forge/manifest.hpp"
#include "support.hpp"

using namespace plcbinx;

namespace {

RecoveredFunction named_fn(std::string id, std::vector<std::string> callees, std::uint64_t size = 8) {
  RecoveredFunction f;
  f.id = std::move(id);
  f.named = true;
  f.size_bytes = size;
  std::uint64_t at = 0;
  for (auto& c : callees) f.calls.push_back({at += 4, CallKind::DirectResolved, 0, c, false});
  return f;
}

}  // namespace

TEST(Glob, Matching) {
  EXPECT_TRUE(glob_match("*", ""));
  EXPECT_TRUE(glob_match("dt_PR_*exec", "dt_PR_main_exec"));
  EXPECT_FALSE(glob_match("dt_PR_*exec", "dt_PR_main_exec2"));
  EXPECT_TRUE(glob_match("*PROGRAM0_body__*", "PROGRAM0_body__"));
  EXPECT_TRUE(glob_match("a?c", "abc"));
  EXPECT_FALSE(glob_match("a?c", "ac"));
  EXPECT_FALSE(glob_match("Abc", "abc"));
  EXPECT_TRUE(glob_match("*a*b*", "xxaxxbxx"));
}

TEST(CoreFn, CategoriesMatchManifests) {
  const auto rules = default_core_rules();
  for (const auto& raw : testkit::small_records()) {
    const auto rec = classify(raw, *raw.platform_label, rules);
    const auto m = testkit::read_manifest(testkit::small_corpus(), rec.binary_id);
    forge::CompareOptions opt;
    opt.structure = false;
    const auto diffs = forge::compare_record(rec, m, opt);
    EXPECT_TRUE(diffs.empty()) << diffs.front();
  }
}

TEST(CoreFn, PlatformFreeAgreesOnCorpus) {
  const auto rules = default_core_rules();
  for (const auto& raw : testkit::small_records())
    EXPECT_EQ(classify_any(raw, rules), classify(raw, *raw.platform_label, rules)) << raw.binary_id;
}

TEST(CoreFn, TraversalFollowsEligibleCallees) {
  FunctionProgramRecord rec;
  rec.binary_id = "t";
  rec.functions = {named_fn("PROGRAM0_body__", {"helper", "digitalWrite", "memcpy"}), named_fn("helper", {"leaf"}),
                   named_fn("leaf", {}), named_fn("digitalWrite", {"leaf2"}), named_fn("leaf2", {}),
                   named_fn("unreached", {})};
  const auto out = classify(rec, Platform::OpenPLCv3, default_core_rules());
  std::vector<Category> cats;
  for (const auto& f : out.functions) cats.push_back(f.category);
  EXPECT_EQ(cats, (std::vector<Category>{Category::Core, Category::Core, Category::Core, Category::Runtime,
                                         Category::Runtime, Category::Runtime}));
}

TEST(CoreFn, CodesysTakesAllNamedPous) {
  FunctionProgramRecord rec;
  rec.functions = {named_fn("PLC_PRG", {}), named_fn("FB_Pump", {}), named_fn("sub_00001000", {})};
  rec.functions[2].named = false;
  const auto out = classify(rec, Platform::CODESYSv3, default_core_rules());
  EXPECT_EQ(out.functions[0].category, Category::Core);
  EXPECT_EQ(out.functions[1].category, Category::Core);
  EXPECT_EQ(out.functions[2].category, Category::Runtime);
}

TEST(CoreFn, MissingSeedIsDiagnosed) {
  FunctionProgramRecord rec;
  rec.binary_id = "noseed";
  rec.functions = {named_fn("main", {}), named_fn("helper", {})};
  Diagnostics d;
  const auto out = classify(rec, Platform::GEB, default_core_rules(), &d);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].find("NoSeedFound"), std::string::npos);
  for (const auto& f : out.functions) EXPECT_EQ(f.category, Category::Runtime);
}

TEST(CoreFn, RulesJsonRoundTrip) {
  const auto rules = default_core_rules();
  const auto j = rules_to_json(rules);
  EXPECT_EQ(rules_to_json(rules_from_json(j)), j);
  auto bad = j;
  bad["rules"][0]["platforms"][0] = "S7";
  EXPECT_THROW(rules_from_json(bad), Error);
  EXPECT_THROW(rules_from_json(nlohmann::ordered_json::parse("{}")), Error);
}

TEST(CoreFn, UnknownPlatformRuleSet) {
  CoreRules rules;
  try {
    rules.for_platform(Platform::GEB);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
  }
}

TEST(Distribution, HandComputed) {
  auto rec = [](Platform p, std::vector<std::pair<Category, std::uint64_t>> fns) {
    FunctionProgramRecord r;
    r.platform_label = p;
    for (auto [c, s] : fns) {
      RecoveredFunction f;
      f.category = c;
      f.size_bytes = s;
      r.functions.push_back(f);
    }
    return r;
  };
  const std::vector<FunctionProgramRecord> recs{
      rec(Platform::GEB, {{Category::Core, 40}, {Category::Core, 80}, {Category::Runtime, 8}}),
      rec(Platform::GEB, {{Category::Core, 20}, {Category::Runtime, 16}, {Category::Runtime, 32}}),
      rec(Platform::OpenPLCv2, {{Category::Runtime, 100}}),
  };
  const auto rows = distribution_stats(recs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].platform, Platform::GEB);
  EXPECT_EQ(rows[0].binaries, 2u);
  EXPECT_EQ(rows[0].core_total, 3u);
  EXPECT_DOUBLE_EQ(rows[0].core_per_binary, 1.5);
  EXPECT_DOUBLE_EQ(rows[0].core_size_mean, 140.0 / 3);
  EXPECT_DOUBLE_EQ(rows[0].core_size_median, 40);
  EXPECT_DOUBLE_EQ(rows[0].runtime_size_median, 16);
  EXPECT_DOUBLE_EQ(rows[1].core_per_binary, 0);
  const auto tsv = distribution_tsv(rows);
  EXPECT_NE(tsv.find("GEB\t2\t3\t1.50\t46.7\t40.0\t3\t1.50\t18.7\t16.0\n"), std::string::npos) << tsv;
}

TEST(Distribution, CorpusCoreCountsInRange) {
  const auto rules = default_core_rules();
  std::vector<FunctionProgramRecord> recs;
  for (const auto& r : testkit::small_records()) recs.push_back(classify(r, *r.platform_label, rules));
  const auto rows = distribution_stats(recs);
  EXPECT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_GE(r.core_per_binary, 2.0) << to_string(r.platform);
    EXPECT_LE(r.core_per_binary, 4.0) << to_string(r.platform);
  }
}
