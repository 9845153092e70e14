#pragma once

// Minimal ELF32/PE32 loaders and a heuristic prober for opaque application
// containers. Everything here is a pure function of its byte inputs.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plcbinx/common.hpp"
#include "plcbinx/disasm.hpp"

namespace plcbinx {

enum class BinaryFormat { ELF, PE, APP };

inline const char* to_string(BinaryFormat f) {
  switch (f) {
    case BinaryFormat::ELF: return "ELF";
    case BinaryFormat::PE: return "PE";
    case BinaryFormat::APP: return "APP";
  }
  return "?";
}

struct CodeRegion {
  std::uint64_t offset = 0;   // file offset
  std::uint64_t length = 0;
  std::uint64_t address = 0;  // virtual address of the first byte
  bool operator==(const CodeRegion&) const = default;
  bool contains_address(std::uint64_t a) const { return a >= address && a < address + length; }
};

struct Symbol {
  std::string name;
  std::uint64_t address = 0;
  bool is_code = true;
  bool operator==(const Symbol&) const = default;
};

struct MetadataRecord {
  std::string name;
  std::uint64_t code_pointer = 0;
  std::uint64_t raw_offset = 0;
  bool operator==(const MetadataRecord&) const = default;
};

struct LoadedImage {
  BinaryFormat format = BinaryFormat::ELF;
  Bytes bytes;
  std::vector<CodeRegion> code_regions;
  std::uint64_t base_address = 0;
  std::vector<Symbol> symbols;
  std::vector<MetadataRecord> metadata_records;
  std::string source_path;
  std::uint32_t machine = 0;

  bool operator==(const LoadedImage&) const = default;

  const CodeRegion* region_for_address(std::uint64_t a) const {
    for (const auto& r : code_regions)
      if (r.contains_address(a)) return &r;
    return nullptr;
  }
  bool is_code_address(std::uint64_t a) const { return region_for_address(a) != nullptr; }
};

struct ProbeConfig {
  std::size_t window = 256;
  std::size_t stride = 256;
  double stability_threshold = 0.90;
  double decode_validity = 0.60;
  std::size_t words_per_transfer = 64;
};

namespace detail {

inline void finalize_regions(LoadedImage& img) {
  std::sort(img.code_regions.begin(), img.code_regions.end(),
            [](const CodeRegion& a, const CodeRegion& b) { return a.offset < b.offset; });
  for (std::size_t i = 0; i < img.code_regions.size(); ++i) {
    const auto& r = img.code_regions[i];
    if (r.offset + r.length > img.bytes.size())
      throw Error(ErrorKind::MalformedHeader, "code region past end of file");
    if (i > 0) {
      const auto& p = img.code_regions[i - 1];
      if (p.offset + p.length > r.offset) throw Error(ErrorKind::MalformedHeader, "overlapping code regions");
    }
  }
  for (auto& s : img.symbols) s.is_code = img.is_code_address(s.address);
}

inline void check_range(const LeReader& rd, std::uint64_t off, std::uint64_t n, const char* what) {
  if (!rd.has(off, n)) throw Error(ErrorKind::MalformedHeader, std::string(what) + " outside file");
}

}  // namespace detail

inline constexpr std::uint16_t kElfMachineArm = 40;
inline constexpr std::uint16_t kPeMachineArm = 0x01C0;

inline bool has_elf_magic(ByteView b) {
  return b.size() >= 4 && b[0] == 0x7F && b[1] == 'E' && b[2] == 'L' && b[3] == 'F';
}
inline bool has_pe_magic(ByteView b) { return b.size() >= 2 && b[0] == 'M' && b[1] == 'Z'; }

inline LoadedImage load_elf(ByteView bytes) {
  if (!has_elf_magic(bytes)) throw Error(ErrorKind::MalformedHeader, "missing ELF magic");
  LeReader rd(bytes);
  if (bytes.size() < 52) throw Error(ErrorKind::MalformedHeader, "truncated ELF header");
  if (rd.u8(4) != 1) throw Error(ErrorKind::UnsupportedClass, "only ELFCLASS32 is supported");
  if (rd.u8(5) != 1) throw Error(ErrorKind::UnsupportedClass, "only little-endian ELF is supported");

  LoadedImage img;
  img.format = BinaryFormat::ELF;
  img.bytes.assign(bytes.begin(), bytes.end());
  img.machine = rd.u16(0x12);
  if (img.machine != kElfMachineArm)
    throw Error(ErrorKind::UnsupportedMachine, "ELF machine " + std::to_string(img.machine));

  const std::uint32_t phoff = rd.u32(0x1C), shoff = rd.u32(0x20);
  const std::uint16_t phentsize = rd.u16(0x2A), phnum = rd.u16(0x2C);
  const std::uint16_t shentsize = rd.u16(0x2E), shnum = rd.u16(0x30);

  std::optional<std::uint64_t> base;
  if (phnum > 0) {
    if (phentsize < 32) throw Error(ErrorKind::MalformedHeader, "bad program header size");
    detail::check_range(rd, phoff, std::uint64_t(phentsize) * phnum, "program headers");
    for (unsigned i = 0; i < phnum; ++i) {
      const std::uint64_t ph = phoff + std::uint64_t(i) * phentsize;
      if (rd.u32(ph) != 1) continue;  // PT_LOAD
      const std::uint64_t off = rd.u32(ph + 4), vaddr = rd.u32(ph + 8);
      if (vaddr < off) continue;
      const std::uint64_t b = vaddr - off;
      base = base ? std::min(*base, b) : b;
    }
  }
  img.base_address = base.value_or(0);

  if (shnum == 0) return img;
  if (shentsize < 40) throw Error(ErrorKind::MalformedHeader, "bad section header size");
  detail::check_range(rd, shoff, std::uint64_t(shentsize) * shnum, "section headers");

  struct Shdr {
    std::uint32_t type, flags, addr, offset, size, link, entsize;
  };
  std::vector<Shdr> sh(shnum);
  for (unsigned i = 0; i < shnum; ++i) {
    const std::uint64_t s = shoff + std::uint64_t(i) * shentsize;
    sh[i] = {rd.u32(s + 4), rd.u32(s + 8), rd.u32(s + 12), rd.u32(s + 16), rd.u32(s + 20), rd.u32(s + 24),
             rd.u32(s + 36)};
  }

  constexpr std::uint32_t kShtSymtab = 2, kShtNobits = 8, kShfExec = 4;
  for (const auto& s : sh) {
    if (s.type == kShtNobits || !(s.flags & kShfExec) || s.size == 0) continue;
    detail::check_range(rd, s.offset, s.size, "executable section");
    img.code_regions.push_back({s.offset, s.size & ~std::uint64_t{3}, s.addr});
  }

  for (const auto& s : sh) {
    if (s.type != kShtSymtab) continue;
    if (s.link >= shnum) throw Error(ErrorKind::MalformedHeader, "symtab string table index");
    const auto& strtab = sh[s.link];
    detail::check_range(rd, s.offset, s.size, "symbol table");
    detail::check_range(rd, strtab.offset, strtab.size, "string table");
    for (std::uint64_t e = s.offset; e + 16 <= std::uint64_t(s.offset) + s.size; e += 16) {
      const std::uint32_t name = rd.u32(e), value = rd.u32(e + 4);
      const std::uint8_t info = rd.u8(e + 12);
      if ((info & 0xF) != 2) continue;  // STT_FUNC
      if (name >= strtab.size) throw Error(ErrorKind::MalformedHeader, "symbol name offset");
      img.symbols.push_back({rd.cstr(strtab.offset + name), value, true});
    }
  }
  detail::finalize_regions(img);
  return img;
}

inline LoadedImage load_pe(ByteView bytes) {
  if (!has_pe_magic(bytes)) throw Error(ErrorKind::MalformedHeader, "missing MZ magic");
  LeReader rd(bytes);
  if (bytes.size() < 0x40) throw Error(ErrorKind::MalformedHeader, "truncated DOS header");
  const std::uint32_t pe = rd.u32(0x3C);
  if (!rd.has(pe, 24) || rd.u32(pe) != 0x00004550u) throw Error(ErrorKind::MalformedHeader, "PE signature");

  LoadedImage img;
  img.format = BinaryFormat::PE;
  img.bytes.assign(bytes.begin(), bytes.end());
  img.machine = rd.u16(pe + 4);
  if (img.machine != kPeMachineArm)
    throw Error(ErrorKind::UnsupportedMachine, "PE machine 0x" + hex_lower(img.machine));

  const std::uint16_t nsec = rd.u16(pe + 6);
  const std::uint32_t symptr = rd.u32(pe + 12), nsyms = rd.u32(pe + 16);
  const std::uint16_t optsize = rd.u16(pe + 20);
  const std::uint64_t opt = pe + 24;
  detail::check_range(rd, opt, optsize, "optional header");
  if (optsize < 96 || rd.u16(opt) != 0x10B) throw Error(ErrorKind::UnsupportedClass, "only PE32 images are supported");
  img.base_address = rd.u32(opt + 28);
  const std::uint32_t ndirs = rd.u32(opt + 92);

  struct Section {
    std::uint32_t vsize, va, rawsize, rawptr, chars;
  };
  std::vector<Section> secs(nsec);
  const std::uint64_t sectab = opt + optsize;
  detail::check_range(rd, sectab, std::uint64_t(nsec) * 40, "section table");
  for (unsigned i = 0; i < nsec; ++i) {
    const std::uint64_t s = sectab + std::uint64_t(i) * 40;
    secs[i] = {rd.u32(s + 8), rd.u32(s + 12), rd.u32(s + 16), rd.u32(s + 20), rd.u32(s + 36)};
  }

  constexpr std::uint32_t kScnCode = 0x20, kScnExec = 0x20000000;
  for (const auto& s : secs) {
    if (!(s.chars & (kScnCode | kScnExec))) continue;
    std::uint64_t len = s.vsize ? std::min(s.vsize, s.rawsize) : s.rawsize;
    len &= ~std::uint64_t{3};
    if (len == 0) continue;
    detail::check_range(rd, s.rawptr, len, "executable section");
    img.code_regions.push_back({s.rawptr, len, img.base_address + s.va});
  }

  auto rva_to_offset = [&](std::uint32_t rva) -> std::optional<std::uint64_t> {
    for (const auto& s : secs)
      if (rva >= s.va && rva < s.va + std::max(s.vsize, s.rawsize)) return std::uint64_t(s.rawptr) + (rva - s.va);
    return std::nullopt;
  };

  if (symptr != 0 && nsyms > 0) {
    detail::check_range(rd, symptr, std::uint64_t(nsyms) * 18, "COFF symbol table");
    const std::uint64_t strtab = symptr + std::uint64_t(nsyms) * 18;
    for (std::uint32_t i = 0; i < nsyms; ++i) {
      const std::uint64_t e = symptr + std::uint64_t(i) * 18;
      const std::uint32_t value = rd.u32(e + 8);
      const auto secnum = static_cast<std::int16_t>(rd.u16(e + 12));
      const std::uint16_t type = rd.u16(e + 14);
      const std::uint8_t naux = rd.u8(e + 17);
      if (type == 0x20 && secnum >= 1 && secnum <= nsec) {
        std::string name;
        if (rd.u32(e) == 0) {
          name = rd.cstr(strtab + rd.u32(e + 4));
        } else {
          for (int k = 0; k < 8 && rd.u8(e + k); ++k) name.push_back(static_cast<char>(rd.u8(e + k)));
        }
        img.symbols.push_back({name, img.base_address + secs[secnum - 1].va + value, true});
      }
      i += naux;
    }
  } else if (ndirs > 0) {
    const std::uint32_t exp_rva = rd.u32(opt + 96), exp_size = rd.u32(opt + 100);
    if (exp_rva != 0 && exp_size != 0) {
      auto dir = rva_to_offset(exp_rva);
      if (!dir) throw Error(ErrorKind::MalformedHeader, "export directory RVA");
      const std::uint32_t nfuncs = rd.u32(*dir + 20), nnames = rd.u32(*dir + 24);
      auto funcs = rva_to_offset(rd.u32(*dir + 28));
      auto names = rva_to_offset(rd.u32(*dir + 32));
      auto ords = rva_to_offset(rd.u32(*dir + 36));
      if (nnames > 0 && (!funcs || !names || !ords)) throw Error(ErrorKind::MalformedHeader, "export tables");
      for (std::uint32_t i = 0; i < nnames; ++i) {
        auto name_off = rva_to_offset(rd.u32(*names + 4ull * i));
        if (!name_off) throw Error(ErrorKind::MalformedHeader, "export name RVA");
        const std::uint16_t ord = rd.u16(*ords + 2ull * i);
        if (ord >= nfuncs) throw Error(ErrorKind::MalformedHeader, "export ordinal");
        img.symbols.push_back({rd.cstr(*name_off), img.base_address + rd.u32(*funcs + 4ull * ord), true});
      }
    }
  }
  detail::finalize_regions(img);
  // Names outside executable sections are not function identities.
  std::erase_if(img.symbols, [](const Symbol& s) { return !s.is_code; });
  return img;
}

// Per-window stability of `target` against `peers`: fraction of equal bytes at
// the same offsets, averaged over peers. Bytes past a peer's end never match.
inline std::vector<bool> stable_windows(ByteView target, const std::vector<ByteView>& peers,
                                        const ProbeConfig& cfg) {
  std::vector<bool> stable;
  for (std::size_t start = 0; start < target.size(); start += cfg.stride) {
    const std::size_t len = std::min(cfg.window, target.size() - start);
    std::uint64_t equal = 0;
    for (const auto& peer : peers)
      for (std::size_t i = start; i < start + len && i < peer.size(); ++i) equal += target[i] == peer[i];
    const double total = static_cast<double>(len) * static_cast<double>(peers.size());
    stable.push_back(static_cast<double>(equal) >= cfg.stability_threshold * total);
    if (start + cfg.window >= target.size()) break;
  }
  return stable;
}

inline bool looks_like_code(ByteView region, const ProbeConfig& cfg, const IsaDecoder& isa = default_decoder()) {
  const std::size_t words = region.size() / 4;
  if (words == 0) return false;
  LeReader rd(region);
  std::size_t decoded = 0, transfers = 0;
  for (std::size_t i = 0; i < words; ++i) {
    auto in = isa.decode(rd.u32(4 * i), 4 * i);
    if (!in) continue;
    ++decoded;
    transfers += in->is_control_transfer();
  }
  if (static_cast<double>(decoded) < cfg.decode_validity * static_cast<double>(words)) return false;
  return transfers * cfg.words_per_transfer >= decoded;
}

inline LoadedImage probe_container(ByteView target, const std::vector<ByteView>& peers,
                                   const ProbeConfig& cfg = {}) {
  if (peers.empty()) throw Error(ErrorKind::NoPeers, "container probing needs at least one peer file");
  if (target.size() < cfg.window) throw Error(ErrorKind::MalformedHeader, "container shorter than one window");

  LoadedImage img;
  img.format = BinaryFormat::APP;
  img.bytes.assign(target.begin(), target.end());

  const auto stable = stable_windows(target, peers, cfg);
  std::size_t i = 0;
  while (i < stable.size()) {
    if (stable[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < stable.size() && !stable[j + 1]) ++j;
    const std::uint64_t lo = i * cfg.stride;
    std::uint64_t hi = std::min<std::uint64_t>(j * cfg.stride + cfg.window, target.size());
    hi = lo + ((hi - lo) & ~std::uint64_t{3});
    if (hi > lo && looks_like_code(target.subspan(lo, hi - lo), cfg)) img.code_regions.push_back({lo, hi - lo, lo});
    i = j + 1;
  }
  if (img.code_regions.empty()) throw Error(ErrorKind::NoCodeFound, "no variable region decodes as code");
  detail::finalize_regions(img);
  return img;
}

inline std::vector<MetadataRecord> scan_metadata_records(const LoadedImage& image) {
  const ByteView bytes(image.bytes);
  LeReader rd(bytes);

  std::vector<std::pair<std::uint64_t, std::uint64_t>> gaps;  // non-code [lo, hi)
  std::uint64_t cursor = 0;
  for (const auto& r : image.code_regions) {
    if (r.offset > cursor) gaps.emplace_back(cursor, r.offset);
    cursor = std::max(cursor, r.offset + r.length);
  }
  if (cursor < bytes.size()) gaps.emplace_back(cursor, bytes.size());

  auto plausible_name = [&](std::uint32_t off) -> std::optional<std::string> {
    std::string s;
    for (std::uint64_t i = off; i < bytes.size(); ++i) {
      const std::uint8_t c = bytes[i];
      if (c == 0) return s.empty() ? std::nullopt : std::optional<std::string>(s);
      if (c < 0x20 || c > 0x7E || s.size() == 255) return std::nullopt;
      s.push_back(static_cast<char>(c));
    }
    return std::nullopt;
  };

  std::map<std::uint64_t, MetadataRecord> by_pointer;
  for (auto [lo, hi] : gaps) {
    for (std::uint64_t p = (lo + 3) & ~std::uint64_t{3}; p + 8 <= hi; p += 4) {
      const std::uint32_t name_off = rd.u32(p), ptr = rd.u32(p + 4);
      if (ptr % 4 != 0 || !image.is_code_address(image.base_address + ptr) || name_off >= bytes.size()) continue;
      auto name = plausible_name(name_off);
      if (!name) continue;
      by_pointer.try_emplace(ptr, MetadataRecord{*name, ptr, p});
    }
  }
  std::vector<MetadataRecord> out;
  for (auto& [_, rec] : by_pointer) out.push_back(std::move(rec));
  return out;
}

}  // namespace plcbinx
