#pragma once

// File-level pipeline glue: corpus index parsing, container detection, peer
// selection for opaque containers, and load → recover.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "plcbinx/binloader.hpp"
#include "plcbinx/corefn.hpp"
#include "plcbinx/funcrec.hpp"
#include "plcbinx/io.hpp"

namespace plcbinx {

struct IndexRow {
  std::string binary_id;
  std::string program_id;
  Platform platform = Platform::GEB;
  std::string label;
  fs::path path;  // resolved against the index location
};

inline std::vector<IndexRow> read_index(const fs::path& tsv) {
  std::istringstream in(read_text(tsv));
  std::vector<IndexRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || (n == 1 && line.starts_with("binary_id"))) continue;
    const auto f = split_tabs(line);
    if (f.size() != 5) throw Error(ErrorKind::SchemaViolation, tsv.string() + ":" + std::to_string(n) + ": expected 5 columns");
    auto plat = parse_platform(f[2]);
    if (!plat) throw Error(ErrorKind::SchemaViolation, tsv.string() + ":" + std::to_string(n) + ": unknown platform " + f[2]);
    rows.push_back({f[0], f[1], *plat, f[3], tsv.parent_path() / f[4]});
  }
  return rows;
}

inline std::optional<BinaryFormat> sniff_format(ByteView b) {
  if (has_elf_magic(b)) return BinaryFormat::ELF;
  if (has_pe_magic(b)) return BinaryFormat::PE;
  return std::nullopt;
}

inline constexpr std::size_t kMaxPeers = 4;

// Up to four other `.app` files from `dir`, in name order.
inline std::vector<fs::path> select_peers(const fs::path& target, const fs::path& dir) {
  std::vector<fs::path> all;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".app") all.push_back(e.path());
  std::sort(all.begin(), all.end());
  std::vector<fs::path> out;
  for (const auto& p : all) {
    if (out.size() == kMaxPeers) break;
    if (p.filename() != target.filename()) out.push_back(p);
  }
  return out;
}

struct LoadOptions {
  std::optional<fs::path> peers_dir;  // defaults to the target's directory
  std::optional<BinaryFormat> format;
  ProbeConfig probe;
};

inline LoadedImage load_image(const fs::path& path, const LoadOptions& opt = {}) {
  const Bytes bytes = read_bytes(path);
  const auto format = opt.format ? opt.format : sniff_format(bytes);
  LoadedImage img;
  if (format == BinaryFormat::ELF) {
    img = load_elf(bytes);
  } else if (format == BinaryFormat::PE) {
    img = load_pe(bytes);
  } else {
    const auto peer_paths = select_peers(path, opt.peers_dir.value_or(path.parent_path()));
    std::vector<Bytes> peers;
    for (const auto& p : peer_paths) peers.push_back(read_bytes(p));
    std::vector<ByteView> views(peers.begin(), peers.end());
    img = probe_container(bytes, views, opt.probe);
    img.metadata_records = scan_metadata_records(img);
  }
  img.source_path = path.string();
  return img;
}

inline FunctionProgramRecord analyze_file(const fs::path& path, const RecordLabels& labels, const LoadOptions& opt = {},
                                          Diagnostics* diags = nullptr) {
  return recover_image(load_image(path, opt), labels, diags);
}

inline RecordLabels labels_for(const IndexRow& r) { return {r.binary_id, r.program_id, r.platform, r.label}; }

}  // namespace plcbinx
