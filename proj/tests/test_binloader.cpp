#include <gtest/gtest.h>

#include "plcbinx/binloader.hpp"
#include "plcbinx/forge/manifest.hpp"
#include "support.hpp"

using namespace plcbinx;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

std::vector<IndexRow> rows_of(BinaryFormat f) {
  std::vector<IndexRow> out;
  for (const auto& r : read_index(testkit::small_corpus() / forge::kIndexFile))
    if (sniff_format(read_bytes(r.path)).value_or(BinaryFormat::APP) == f) out.push_back(r);
  return out;
}

}  // namespace

TEST(BinLoader, ImagesMatchManifests) {
  std::size_t checked = 0;
  for (const auto& r : read_index(testkit::small_corpus() / forge::kIndexFile)) {
    const auto img = load_image(r.path);
    const auto m = testkit::read_manifest(testkit::small_corpus(), r.binary_id);
    EXPECT_EQ(img.format, m.format) << r.binary_id;
    const auto diffs = forge::compare_image(img, m, img.format == BinaryFormat::APP ? 256 : 0);
    EXPECT_TRUE(diffs.empty()) << diffs.front();
    ++checked;
  }
  EXPECT_GT(checked, 60u);
}

TEST(BinLoader, EveryFormatIsPresent) {
  EXPECT_FALSE(rows_of(BinaryFormat::ELF).empty());
  EXPECT_FALSE(rows_of(BinaryFormat::PE).empty());
  EXPECT_FALSE(rows_of(BinaryFormat::APP).empty());
}

TEST(BinLoader, ElfErrors) {
  const Bytes elf = read_bytes(rows_of(BinaryFormat::ELF).front().path);
  EXPECT_EQ(kind_of([&] { load_elf(ByteView(elf).first(40)); }), ErrorKind::MalformedHeader);
  Bytes wide = elf;
  wide[4] = 2;
  EXPECT_EQ(kind_of([&] { load_elf(wide); }), ErrorKind::UnsupportedClass);
  Bytes x86 = elf;
  x86[0x12] = 3;
  x86[0x13] = 0;
  EXPECT_EQ(kind_of([&] { load_elf(x86); }), ErrorKind::UnsupportedMachine);
  Bytes junk = elf;
  junk[0] = 0;
  EXPECT_EQ(kind_of([&] { load_elf(junk); }), ErrorKind::MalformedHeader);
}

TEST(BinLoader, PeErrors) {
  const Bytes pe = read_bytes(rows_of(BinaryFormat::PE).front().path);
  EXPECT_EQ(kind_of([&] { load_pe(ByteView(pe).first(32)); }), ErrorKind::MalformedHeader);
  Bytes bad_sig = pe;
  LeReader rd(pe);
  bad_sig[rd.u32(0x3C)] = 'X';
  EXPECT_EQ(kind_of([&] { load_pe(bad_sig); }), ErrorKind::MalformedHeader);
}

TEST(BinLoader, TruncatedFilesNeverCrash) {
  for (auto f : {BinaryFormat::ELF, BinaryFormat::PE}) {
    const Bytes b = read_bytes(rows_of(f).front().path);
    for (std::size_t n : {0ul, 1ul, 63ul, 200ul, b.size() / 2, b.size() - 1}) {
      const ByteView v = ByteView(b).first(n);
      try {
        f == BinaryFormat::ELF ? load_elf(v) : load_pe(v);
      } catch (const Error&) {
      }
    }
  }
}

TEST(BinLoader, ProbeNeedsPeers) {
  const Bytes app = read_bytes(rows_of(BinaryFormat::APP).front().path);
  EXPECT_EQ(kind_of([&] { probe_container(app, {}); }), ErrorKind::NoPeers);
  const Bytes tiny(100, 0);
  EXPECT_EQ(kind_of([&] { probe_container(tiny, {ByteView(tiny)}); }), ErrorKind::MalformedHeader);
}

TEST(BinLoader, IdenticalPeersHideAllCode) {
  const Bytes app = read_bytes(rows_of(BinaryFormat::APP).front().path);
  EXPECT_EQ(kind_of([&] { probe_container(app, {ByteView(app)}); }), ErrorKind::NoCodeFound);
}

TEST(BinLoader, StableWindows) {
  Bytes a(1024, 7), b(1024, 7);
  for (std::size_t i = 256; i < 512; ++i) b[i] = static_cast<std::uint8_t>(i);
  const auto s = stable_windows(a, {ByteView(b)}, ProbeConfig{});
  ASSERT_EQ(s.size(), 4u);
  EXPECT_TRUE(s[0]);
  EXPECT_FALSE(s[1]);
  EXPECT_TRUE(s[2]);
  EXPECT_TRUE(s[3]);
  // a shorter peer never matches past its end
  const auto s2 = stable_windows(a, {ByteView(a).first(300)}, ProbeConfig{});
  EXPECT_FALSE(s2[1]);
}

TEST(BinLoader, PeerSelection) {
  testkit::TempDir d("peers");
  for (const char* n : {"e.app", "a.app", "c.app", "b.app", "d.app", "f.app", "x.bin"})
    write_atomic(d.path() / n, std::string("x"));
  const auto peers = select_peers(d.path() / "c.app", d.path());
  ASSERT_EQ(peers.size(), kMaxPeers);
  EXPECT_EQ(peers[0].filename(), "a.app");
  EXPECT_EQ(peers[1].filename(), "b.app");
  EXPECT_EQ(peers[2].filename(), "d.app");
  EXPECT_EQ(peers[3].filename(), "e.app");
}

TEST(BinLoader, FormatSniffing) {
  EXPECT_EQ(sniff_format(read_bytes(rows_of(BinaryFormat::ELF).front().path)), BinaryFormat::ELF);
  EXPECT_EQ(sniff_format(read_bytes(rows_of(BinaryFormat::PE).front().path)), BinaryFormat::PE);
  EXPECT_EQ(sniff_format(read_bytes(rows_of(BinaryFormat::APP).front().path)), std::nullopt);
}

TEST(BinLoader, AppMetadataRecordsName) {
  for (const auto& r : rows_of(BinaryFormat::APP)) {
    const auto img = load_image(r.path);
    const auto m = testkit::read_manifest(testkit::small_corpus(), r.binary_id);
    EXPECT_EQ(img.metadata_records, m.records) << r.binary_id;
    EXPECT_FALSE(img.metadata_records.empty());
  }
}
