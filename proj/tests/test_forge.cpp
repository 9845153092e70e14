#include <gtest/gtest.h>

#include <set>

#include "plcbinx/forge/corpus.hpp"
#include "support.hpp"

using namespace plcbinx;
using namespace plcbinx::forge;

namespace {

std::uint32_t word_at(const Bytes& b, std::uint64_t off) {
  return static_cast<std::uint32_t>(b.at(off)) | static_cast<std::uint32_t>(b.at(off + 1)) << 8 |
         static_cast<std::uint32_t>(b.at(off + 2)) << 16 | static_cast<std::uint32_t>(b.at(off + 3)) << 24;
}

// One planned build of each platform.
std::vector<PlannedBinary> one_per_platform() {
  ForgeSpec spec;
  spec.programs_per_label = 3;
  spec.labels = {"Pulse_Gen", "Str_Func"};
  std::vector<PlannedBinary> out;
  for (Platform p : kAllPlatforms)
    for (const auto& b : plan_corpus(spec))
      if (b.meta.platform == p) {
        out.push_back(b);
        break;
      }
  return out;
}

}  // namespace

TEST(Plan, ProgramLevelStructure) {
  ForgeSpec spec;
  const auto plan = plan_corpus(spec);
  std::map<std::string, std::set<Platform>> builds;
  std::map<std::string, std::uint64_t> seeds;
  std::set<std::string> ids, labels;
  for (const auto& b : plan) {
    EXPECT_TRUE(ids.insert(b.meta.binary_id).second) << b.meta.binary_id;
    EXPECT_TRUE(builds[b.meta.program_id].insert(b.meta.platform).second);
    EXPECT_TRUE(b.meta.program_id.starts_with(b.meta.label + "-p"));
    auto [it, fresh] = seeds.emplace(b.meta.program_id, b.program_seed);
    if (!fresh) {
      EXPECT_EQ(it->second, b.program_seed);
    }
    labels.insert(b.meta.label);
  }
  EXPECT_EQ(labels.size(), kFunctionalityLabels.size());
  EXPECT_EQ(builds.size(), kFunctionalityLabels.size() * spec.programs_per_label);
  std::map<std::string, std::size_t> skips;
  for (const auto& [pid, ps] : builds) {
    EXPECT_GE(ps.size(), 3u) << pid;
    if (ps.size() == 3) ++skips[pid.substr(0, pid.rfind("-p"))];
  }
  for (const auto& [label, n] : skips) EXPECT_LE(n, spec.max_skips_per_label) << label;
}

TEST(Plan, SeedAndTruncation) {
  ForgeSpec a;
  ForgeSpec b;
  b.seed = 2;
  const auto pa = plan_corpus(a), pb = plan_corpus(b);
  EXPECT_EQ(plan_corpus(a).size(), pa.size());
  EXPECT_NE(pa.front().program_seed, pb.front().program_seed);
  a.max_binaries = 10;
  const auto cut = plan_corpus(a);
  ASSERT_EQ(cut.size(), 10u);
  for (std::size_t i = 0; i < cut.size(); ++i) EXPECT_EQ(cut[i].meta.binary_id, pa[i].meta.binary_id);
}

TEST(Plan, UnknownLabelRejected) {
  ForgeSpec spec;
  spec.labels = {"Not_A_Label"};
  EXPECT_THROW(plan_corpus(spec), Error);
}

TEST(Program, RoutineShape) {
  for (auto label : kFunctionalityLabels) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const Program p = forge_program(label, s);
      ASSERT_GE(p.routines.size(), 2u);
      ASSERT_LE(p.routines.size(), 4u);
      EXPECT_TRUE(p.routines[0].stem.empty());
      for (std::size_t i = 0; i < p.routines.size(); ++i)
        for (auto c : p.routines[i].callees) EXPECT_GT(c, i);
      EXPECT_EQ(p, forge_program(label, s));
    }
  }
}

TEST(Binary, DeterministicBytesAndManifest) {
  for (const auto& b : one_per_platform()) {
    const auto x = forge_planned(b), y = forge_planned(b);
    EXPECT_EQ(x.bytes, y.bytes) << b.meta.binary_id;
    EXPECT_EQ(x.manifest, y.manifest);
    EXPECT_EQ(x.manifest.format, format_for(b.meta.platform));
    PlannedBinary other = b;
    other.binary_seed ^= 1;
    EXPECT_NE(forge_planned(other).bytes, x.bytes);
  }
}

TEST(Binary, ManifestJsonRoundTrip) {
  for (const auto& b : one_per_platform()) {
    const Manifest m = forge_planned(b).manifest;
    const auto j = to_json(m);
    EXPECT_EQ(manifest_from_json(ojson::parse(j.dump())), m) << b.meta.binary_id;
  }
}

// Every manifest instruction word sits in the file at the offset its code
// region maps it to.
TEST(Binary, InstructionWordsAreInTheFile) {
  for (const auto& b : one_per_platform()) {
    const auto fb = forge_planned(b);
    std::size_t checked = 0;
    for (const auto& f : fb.manifest.functions)
      for (const auto& in : f.instructions) {
        const CodeRegion* reg = nullptr;
        for (const auto& r : fb.manifest.code_regions)
          if (in.addr >= r.address && in.addr + 4 <= r.address + r.length) reg = &r;
        ASSERT_NE(reg, nullptr) << b.meta.binary_id << " 0x" << std::hex << in.addr;
        EXPECT_EQ(word_at(fb.bytes, in.addr - reg->address + reg->offset), in.word);
        ++checked;
      }
    EXPECT_GT(checked, 50u);
  }
}

TEST(Binary, CoreFunctionsAndStartup) {
  for (const auto& b : one_per_platform()) {
    const Manifest m = forge_planned(b).manifest;
    EXPECT_GE(m.core_count(), 2u);
    EXPECT_LE(m.core_count(), 4u);
    bool startup = false;
    for (const auto& f : m.functions) {
      EXPECT_FALSE(f.instructions.empty()) << f.id;
      EXPECT_EQ(f.instructions.front().addr, f.entry);
      startup |= f.source_name == startup_name(b.meta.platform);
    }
    EXPECT_TRUE(startup) << b.meta.binary_id;
    for (std::size_t i = 1; i < m.functions.size(); ++i) EXPECT_LT(m.functions[i - 1].entry, m.functions[i].entry);
  }
}

TEST(Corpus, WritesIndexBinariesAndManifests) {
  const auto& dir = testkit::small_corpus();
  const std::string index = read_text(dir / kIndexFile);
  EXPECT_TRUE(index.starts_with("binary_id\tprogram_id\tplatform\tlabel\tpath\n"));
  const auto rows = read_index(dir / kIndexFile);
  ASSERT_GE(rows.size(), 3 * kFunctionalityLabels.size());
  for (const auto& r : rows) {
    EXPECT_TRUE(fs::exists(r.path)) << r.path;
    const Manifest m = testkit::read_manifest(dir, r.binary_id);
    EXPECT_EQ(m.binary_id, r.binary_id);
    EXPECT_EQ(fs::path(r.path).extension().string(), std::string(".") + extension_for(m.format));
  }
}

TEST(Corpus, ParallelMatchesSerial) {
  ForgeSpec spec;
  spec.programs_per_label = 1;
  spec.max_binaries = 12;
  testkit::TempDir a("serial"), b("parallel");
  forge_corpus(spec, a.path(), 1);
  forge_corpus(spec, b.path(), 3);
  EXPECT_EQ(read_text(a.path() / kIndexFile), read_text(b.path() / kIndexFile));
  for (const auto& r : read_index(a.path() / kIndexFile)) {
    const auto rel = fs::relative(r.path, a.path());
    EXPECT_EQ(read_text(a.path() / rel), read_text(b.path() / rel)) << rel;
  }
}
