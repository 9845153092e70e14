#pragma once

// Layout, encoding and container emission for forged functions, with the
// manifest derived from the same construction.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "plcbinx/common.hpp"
#include "plcbinx/forge/manifest.hpp"
#include "plcbinx/forge/program.hpp"

namespace plcbinx::forge {

inline BinaryFormat format_for(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return BinaryFormat::APP;
    case Platform::GEB: return BinaryFormat::ELF;
    case Platform::OpenPLCv2:
    case Platform::OpenPLCv3: return BinaryFormat::PE;
  }
  return BinaryFormat::ELF;
}

inline const char* extension_for(BinaryFormat f) {
  switch (f) {
    case BinaryFormat::ELF: return "elf";
    case BinaryFormat::PE: return "exe";
    case BinaryFormat::APP: return "app";
  }
  return "bin";
}

struct BinaryMeta {
  std::string binary_id;
  std::string program_id;
  Platform platform = Platform::GEB;
  std::string label;
};

struct LinkOptions {
  std::uint64_t seed = 0;       // container filler
  bool pe_split = false;        // code across two executable sections
  bool pe_coff = true;          // COFF symbol table instead of an export directory
  bool alias_record = false;    // extra record repeating the main program's pointer
  bool data_symbol = true;      // function-typed symbol outside code
};

struct ForgedBinary {
  Bytes bytes;
  Manifest manifest;
};

// APP stand-in container layout.
inline constexpr std::uint64_t kAppHeaderEnd = 0x100, kAppSlot = 0x700, kAppSlotEnd = 0x900, kAppCode = 0xB00;
inline constexpr std::uint64_t kElfBase = 0x10000, kElfText = 0x100;
inline constexpr std::uint64_t kPeImageBase = 0x400000, kPeHeaders = 0x400;

namespace detail {

inline std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

inline void fill_random(LeWriter& w, std::size_t n, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) w.u8(static_cast<std::uint8_t>(rng.next()));
}

struct Segment {
  std::uint64_t offset = 0, address = 0;
  std::vector<std::size_t> functions;
  Bytes code;
};

// One encoded instruction with the control-flow facts the manifest needs.
struct Placed {
  ManifestInstr in;
  Item::Kind kind = Item::Kind::Instr;
  Flow flow = Flow::None;
  std::uint32_t cond = as::AL;
  std::uint64_t target = 0;
  std::string callee;
};

inline bool transfers(const Placed& p) { return p.kind != Item::Kind::Instr || p.flow != Flow::None; }

inline std::vector<Placed> place(const ForgeFunction& fn, std::uint64_t entry,
                                 const std::map<std::string, std::uint64_t>& entries) {
  std::vector<std::uint64_t> label_at(static_cast<std::size_t>(fn.body.labels), 0);
  std::uint64_t a = entry;
  for (const auto& it : fn.body.items) {
    if (it.kind == Item::Kind::Label) label_at[static_cast<std::size_t>(it.label)] = a;
    else a += 4;
  }
  auto entry_of = [&](const std::string& name) {
    auto e = entries.find(name);
    if (e == entries.end())
      throw Error(ErrorKind::InvariantViolation, "'" + fn.name + "' calls '" + name + "', which is not linked");
    return e->second;
  };
  std::vector<Placed> out;
  a = entry;
  for (const auto& it : fn.body.items) {
    Placed p;
    p.kind = it.kind;
    switch (it.kind) {
      case Item::Kind::Label: continue;
      case Item::Kind::Instr: {
        p.in = {a, it.instr.word, it.instr.text};
        p.flow = it.instr.flow;
        break;
      }
      case Item::Kind::Branch: {
        p.target = label_at[static_cast<std::size_t>(it.label)];
        p.cond = it.cond;
        const auto enc = as::branch(a, p.target, false, it.cond);
        p.in = {a, enc.word, enc.text};
        break;
      }
      case Item::Kind::Call:
      case Item::Kind::Tail: {
        p.target = entry_of(it.callee);
        p.callee = it.callee;
        const auto enc = as::branch(a, p.target, it.kind == Item::Kind::Call);
        p.in = {a, enc.word, enc.text};
        break;
      }
    }
    out.push_back(std::move(p));
    a += 4;
  }
  return out;
}

// Expected recovery output for one placed function.
inline ManifestFunction expected_function(const ForgeFunction& fn, std::uint64_t entry, const std::vector<Placed>& ps,
                                          const std::map<std::string, std::string>& ids) {
  ManifestFunction mf;
  mf.id = ids.at(fn.name);
  mf.source_name = fn.name;
  mf.entry = entry;
  mf.size = 4 * ps.size();
  mf.category = fn.category;
  mf.named = mf.id != address_id(entry);
  mf.motifs = fn.motifs;

  std::set<std::uint64_t> targets;
  for (const auto& p : ps)
    if (p.kind == Item::Kind::Branch) targets.insert(p.target);
  std::map<std::uint64_t, std::size_t> block_at;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    mf.instructions.push_back(ps[i].in);
    if (i == 0 || targets.contains(ps[i].in.addr) || transfers(ps[i - 1])) {
      block_at[ps[i].in.addr] = mf.blocks.size();
      mf.blocks.emplace_back(ps[i].in.addr, 0);
    }
    ++mf.blocks.back().second;
  }
  std::size_t idx = 0;
  for (std::size_t b = 0; b < mf.blocks.size(); ++b) {
    idx += mf.blocks[b].second;
    const Placed& last = ps[idx - 1];
    auto fall = [&] {
      auto it = block_at.find(last.in.addr + 4);
      if (it != block_at.end()) mf.edges.push_back({b, it->second, EdgeKind::Fallthrough});
    };
    switch (last.kind) {
      case Item::Kind::Branch:
        mf.edges.push_back({b, block_at.at(last.target),
                            last.cond == as::AL ? EdgeKind::Unconditional : EdgeKind::Taken});
        if (last.cond != as::AL) fall();
        break;
      case Item::Kind::Tail: break;
      case Item::Kind::Call: fall(); break;
      default:
        if (last.flow == Flow::None) fall();
        break;
    }
  }
  auto resolved_name = [&](const std::string& callee) -> std::optional<std::string> {
    const std::string& id = ids.at(callee);
    return id.starts_with("sub_") ? std::nullopt : std::optional<std::string>(id);
  };
  for (const auto& p : ps) {
    if (p.kind == Item::Kind::Call || p.kind == Item::Kind::Tail) {
      CallSite c{p.in.addr, CallKind::DirectUnresolved, p.target, {}, p.kind == Item::Kind::Tail};
      if (auto n = resolved_name(p.callee)) {
        c.kind = CallKind::DirectResolved;
        c.target = 0;
        c.name = *n;
      }
      mf.calls.push_back(std::move(c));
    } else if (p.flow == Flow::Indirect) {
      mf.calls.push_back({p.in.addr, CallKind::Indirect, 0, {}, true});
    }
  }
  return mf;
}

// ---------------------------------------------------------------- containers

inline Bytes write_elf(const Segment& text, const std::vector<std::pair<std::string, std::uint64_t>>& funcs,
                       const std::vector<std::uint64_t>& sizes, std::vector<Symbol>& symbols, std::uint64_t entry,
                       bool data_symbol, Rng& rng) {
  LeWriter w;
  w.pad_to(text.offset);
  w.raw(text.code);
  w.align(4);
  const std::uint64_t rodata = w.size();
  fill_random(w, 64 + 4 * rng.below(48), rng);
  w.align(4);
  const std::uint64_t data = w.size();
  const std::uint64_t data_size = 32 + 4 * rng.below(24);
  fill_random(w, data_size, rng);

  LeWriter strtab;
  strtab.u8(0);
  LeWriter symtab;
  symtab.pad_to(16);
  auto sym = [&](const std::string& name, std::uint64_t value, std::uint64_t size, std::uint8_t info,
                 std::uint16_t shndx) {
    const auto off = strtab.size();
    strtab.str(name, true);
    symtab.u32(static_cast<std::uint32_t>(off));
    symtab.u32(static_cast<std::uint32_t>(value));
    symtab.u32(static_cast<std::uint32_t>(size));
    symtab.u8(info);
    symtab.u8(0);
    symtab.u16(shndx);
  };
  for (std::size_t i = 0; i < funcs.size(); ++i) {
    sym(funcs[i].first, funcs[i].second, sizes[i], 0x12, 1);
    symbols.push_back({funcs[i].first, funcs[i].second, true});
  }
  sym("geb_retain_area", kElfBase + data, data_size, 0x11, 3);
  if (data_symbol) {
    sym("geb_vector_stub", kElfBase + data + 8, 8, 0x12, 3);
    symbols.push_back({"geb_vector_stub", kElfBase + data + 8, false});
  }

  w.align(4);
  const std::uint64_t symtab_off = w.size();
  w.raw(symtab.bytes());
  const std::uint64_t strtab_off = w.size();
  w.raw(strtab.bytes());
  const std::uint64_t shstr_off = w.size();
  const std::vector<std::string> names = {"", ".text", ".rodata", ".data", ".symtab", ".strtab", ".shstrtab"};
  std::vector<std::uint32_t> name_off;
  LeWriter shstr;
  for (const auto& n : names) {
    name_off.push_back(static_cast<std::uint32_t>(shstr.size()));
    shstr.str(n, true);
  }
  w.raw(shstr.bytes());
  w.align(4);
  const std::uint64_t shoff = w.size();
  struct Sh {
    std::uint32_t type, flags, addr, off, size, link, info, align, entsize;
  };
  const std::vector<Sh> shs = {
      {0, 0, 0, 0, 0, 0, 0, 0, 0},
      {1, 6, static_cast<std::uint32_t>(text.address), static_cast<std::uint32_t>(text.offset),
       static_cast<std::uint32_t>(text.code.size()), 0, 0, 4, 0},
      {1, 2, static_cast<std::uint32_t>(kElfBase + rodata), static_cast<std::uint32_t>(rodata),
       static_cast<std::uint32_t>(data - rodata), 0, 0, 4, 0},
      {1, 3, static_cast<std::uint32_t>(kElfBase + data), static_cast<std::uint32_t>(data),
       static_cast<std::uint32_t>(data_size), 0, 0, 4, 0},
      {2, 0, 0, static_cast<std::uint32_t>(symtab_off), static_cast<std::uint32_t>(symtab.size()), 5, 1, 4, 16},
      {3, 0, 0, static_cast<std::uint32_t>(strtab_off), static_cast<std::uint32_t>(strtab.size()), 0, 0, 1, 0},
      {3, 0, 0, static_cast<std::uint32_t>(shstr_off), static_cast<std::uint32_t>(shstr.size()), 0, 0, 1, 0}};
  for (std::size_t i = 0; i < shs.size(); ++i) {
    const auto& s = shs[i];
    for (std::uint32_t v : {name_off[i], s.type, s.flags, s.addr, s.off, s.size, s.link, s.info, s.align, s.entsize})
      w.u32(v);
  }
  const std::uint64_t file_size = w.size();

  Bytes out = w.bytes();
  LeWriter h;
  h.raw(Bytes{0x7F, 'E', 'L', 'F', 1, 1, 1, 0});
  h.pad_to(16);
  h.u16(2);
  h.u16(40);
  h.u32(1);
  h.u32(static_cast<std::uint32_t>(entry));
  h.u32(52);
  h.u32(static_cast<std::uint32_t>(shoff));
  h.u32(0x05000200);
  h.u16(52);
  h.u16(32);
  h.u16(1);
  h.u16(40);
  h.u16(static_cast<std::uint16_t>(shs.size()));
  h.u16(6);
  for (std::uint32_t v : {1u, 0u, static_cast<std::uint32_t>(kElfBase), static_cast<std::uint32_t>(kElfBase),
                          static_cast<std::uint32_t>(file_size), static_cast<std::uint32_t>(file_size), 5u, 0x1000u})
    h.u32(v);
  std::copy(h.bytes().begin(), h.bytes().end(), out.begin());
  return out;
}

struct PeSection {
  std::string name;
  std::uint32_t va = 0, rawptr = 0, vsize = 0, chars = 0;
  Bytes data;
};

inline Bytes write_pe(std::vector<PeSection> secs, const std::vector<std::pair<std::string, std::uint64_t>>& funcs,
                      std::vector<Symbol>& symbols, std::uint64_t entry, const LinkOptions& opt, Rng& rng) {
  // Sections after the code sections: read-only data (export directory) and data.
  std::uint32_t va = secs.empty() ? 0x1000 : static_cast<std::uint32_t>(align_up(secs.back().va + secs.back().vsize, 0x1000));
  std::uint32_t raw = secs.empty() ? static_cast<std::uint32_t>(kPeHeaders)
                                   : static_cast<std::uint32_t>(align_up(secs.back().rawptr + secs.back().data.size(), 0x200));
  const std::uint32_t rdata_va = va, rdata_raw = raw;
  const std::uint32_t data_va = rdata_va + 0x1000 * 4;  // room for the export directory
  const std::string data_name = "plc_cfg_table";
  const std::uint64_t data_addr = kPeImageBase + data_va + 16;

  LeWriter rdata;
  std::uint32_t export_size = 0;
  if (!opt.pe_coff) {
    std::vector<std::pair<std::string, std::uint32_t>> exports;
    for (const auto& [n, a] : funcs) exports.emplace_back(n, static_cast<std::uint32_t>(a - kPeImageBase));
    if (opt.data_symbol) exports.emplace_back(data_name, static_cast<std::uint32_t>(data_addr - kPeImageBase));
    std::sort(exports.begin(), exports.end());
    const auto n = static_cast<std::uint32_t>(exports.size());
    const std::uint32_t funcs_rva = rdata_va + 40, names_rva = funcs_rva + 4 * n, ords_rva = names_rva + 4 * n;
    std::uint32_t str_rva = static_cast<std::uint32_t>(align_up(ords_rva + 2 * n, 4));
    const std::string dll = "openplc_rt.exe";
    rdata.u32(0);
    rdata.u32(0);
    rdata.u32(0);
    rdata.u32(str_rva);
    rdata.u32(1);
    rdata.u32(n);
    rdata.u32(n);
    rdata.u32(funcs_rva);
    rdata.u32(names_rva);
    rdata.u32(ords_rva);
    for (const auto& e : exports) rdata.u32(e.second);
    std::uint32_t s = str_rva + static_cast<std::uint32_t>(dll.size()) + 1;
    for (const auto& e : exports) {
      rdata.u32(s);
      s += static_cast<std::uint32_t>(e.first.size()) + 1;
    }
    for (std::uint32_t i = 0; i < n; ++i) rdata.u16(static_cast<std::uint16_t>(i));
    rdata.pad_to(str_rva - rdata_va);
    rdata.str(dll, true);
    for (const auto& e : exports) rdata.str(e.first, true);
    export_size = static_cast<std::uint32_t>(rdata.size());
  }
  for (const auto& [n, a] : funcs) symbols.push_back({n, a, true});
  rdata.align(4);
  fill_random(rdata, 64 + 4 * rng.below(32), rng);
  if (rdata.size() > 0x4000) throw Error(ErrorKind::EncodingOverflow, "export directory too large");
  secs.push_back({".rdata", rdata_va, rdata_raw, static_cast<std::uint32_t>(rdata.size()), 0x40000040, rdata.bytes()});
  LeWriter data;
  fill_random(data, 64 + 4 * rng.below(32), rng);
  secs.push_back({".data", data_va, static_cast<std::uint32_t>(align_up(rdata_raw + rdata.size(), 0x200)),
                  static_cast<std::uint32_t>(data.size()), 0xC0000040, data.bytes()});

  LeWriter w;
  w.raw(Bytes{'M', 'Z'});
  w.pad_to(0x3C);
  w.u32(0x80);
  w.pad_to(0x80);
  w.raw(Bytes{'P', 'E', 0, 0});
  const std::uint64_t coff = w.size();
  w.u16(0x01C0);
  w.u16(static_cast<std::uint16_t>(secs.size()));
  w.u32(0);
  w.u32(0);  // symbol table pointer, patched below
  w.u32(0);
  w.u16(224);
  w.u16(0x0102);
  const std::uint64_t opt_at = w.size();
  std::uint32_t code_size = 0;
  for (const auto& s : secs)
    if (s.chars & 0x20) code_size += static_cast<std::uint32_t>(align_up(s.data.size(), 0x200));
  const std::uint32_t image_size = static_cast<std::uint32_t>(align_up(secs.back().va + secs.back().vsize, 0x1000));
  w.u16(0x10B);
  w.u16(0x0E00);
  w.u32(code_size);
  w.u32(0);
  w.u32(0);
  w.u32(static_cast<std::uint32_t>(entry - kPeImageBase));
  w.u32(secs.front().va);
  w.u32(rdata_va);
  w.u32(static_cast<std::uint32_t>(kPeImageBase));
  w.u32(0x1000);
  w.u32(0x200);
  w.pad_to(opt_at + 56);
  w.u32(image_size);
  w.u32(static_cast<std::uint32_t>(kPeHeaders));
  w.u32(0);
  w.u16(9);
  w.pad_to(opt_at + 92);
  w.u32(16);
  w.u32(opt.pe_coff ? 0 : rdata_va);
  w.u32(export_size);
  w.pad_to(opt_at + 224);
  for (const auto& s : secs) {
    std::string n = s.name;
    n.resize(8, '\0');
    w.raw(Bytes(n.begin(), n.end()));
    w.u32(s.vsize);
    w.u32(s.va);
    w.u32(static_cast<std::uint32_t>(align_up(s.data.size(), 0x200)));
    w.u32(s.rawptr);
    w.u32(0);
    w.u32(0);
    w.u16(0);
    w.u16(0);
    w.u32(s.chars);
  }
  for (const auto& s : secs) {
    w.pad_to(s.rawptr);
    w.raw(s.data);
    w.pad_to(align_up(s.rawptr + s.data.size(), 0x200));
  }
  if (opt.pe_coff) {
    const std::uint64_t symptr = w.size();
    LeWriter strtab;
    std::uint32_t nsyms = 0;
    auto section_of = [&](std::uint64_t addr) -> std::pair<std::uint16_t, std::uint32_t> {
      const std::uint64_t rva = addr - kPeImageBase;
      for (std::size_t i = 0; i < secs.size(); ++i)
        if (rva >= secs[i].va && rva < secs[i].va + std::max<std::uint64_t>(secs[i].vsize, 1))
          return {static_cast<std::uint16_t>(i + 1), static_cast<std::uint32_t>(rva - secs[i].va)};
      throw Error(ErrorKind::InvariantViolation, "symbol outside sections");
    };
    auto sym = [&](const std::string& name, std::uint64_t addr, std::uint16_t type, std::uint8_t cls) {
      if (name.size() <= 8) {
        std::string n = name;
        n.resize(8, '\0');
        w.raw(Bytes(n.begin(), n.end()));
      } else {
        w.u32(0);
        w.u32(static_cast<std::uint32_t>(4 + strtab.size()));
        strtab.str(name, true);
      }
      const auto [sec, value] = section_of(addr);
      w.u32(value);
      w.u16(sec);
      w.u16(type);
      w.u8(cls);
      w.u8(0);
      ++nsyms;
    };
    sym(".file", kPeImageBase + secs.front().va, 0, 103);
    for (const auto& [n, a] : funcs) sym(n, a, 0x20, 2);
    if (opt.data_symbol) sym(data_name, data_addr, 0x20, 2);
    w.u32(static_cast<std::uint32_t>(4 + strtab.size()));
    w.raw(strtab.bytes());
    w.put_u32(coff + 8, static_cast<std::uint32_t>(symptr));
    w.put_u32(coff + 12, nsyms);
  }
  return w.bytes();
}

inline Bytes app_constant(std::string_view what, std::size_t n) {
  Rng rng(fnv1a64(what));
  LeWriter w;
  fill_random(w, n, rng);
  return w.bytes();
}

inline Bytes write_app(const Segment& code, const std::vector<std::pair<std::string, std::uint64_t>>& records,
                       std::vector<MetadataRecord>& expected, const BinaryMeta& meta) {
  Bytes out = app_constant("app-header", kAppHeaderEnd);
  const Bytes tables = app_constant("app-tables", kAppSlot - kAppHeaderEnd);
  out.insert(out.end(), tables.begin(), tables.end());

  LeWriter slot;
  slot.u32(static_cast<std::uint32_t>(records.size()));
  const std::uint64_t strings = kAppSlot + 4 + 8 * records.size();
  std::uint64_t s = strings;
  for (std::size_t i = 0; i < records.size(); ++i) {
    slot.u32(static_cast<std::uint32_t>(s));
    slot.u32(static_cast<std::uint32_t>(records[i].second));
    bool first = std::none_of(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(i),
                              [&](const auto& r) { return r.second == records[i].second; });
    if (first) expected.push_back({records[i].first, records[i].second, kAppSlot + 4 + 8 * i});
    s += records[i].first.size() + 1;
  }
  for (const auto& r : records) slot.str(r.first, true);
  if (kAppSlot + slot.size() > kAppSlotEnd) throw Error(ErrorKind::EncodingOverflow, "record slot overflow");
  Bytes sb = slot.bytes();
  sb.resize(kAppSlotEnd - kAppSlot, 0xFF);
  out.insert(out.end(), sb.begin(), sb.end());

  const Bytes sep = app_constant("app-separator", kAppCode - kAppSlotEnd);
  out.insert(out.end(), sep.begin(), sep.end());
  out.insert(out.end(), code.code.begin(), code.code.end());

  LeWriter fields;
  fields.raw(Bytes{'P', 'L', 'C', 'A', 'P', 'P', 1, 0});
  fields.u32(static_cast<std::uint32_t>(out.size()));
  fields.u32(static_cast<std::uint32_t>(code.code.size()));
  fields.u32(static_cast<std::uint32_t>(fnv1a64(meta.program_id)));
  fields.u32(static_cast<std::uint32_t>(records.size()));
  std::copy(fields.bytes().begin(), fields.bytes().end(), out.begin() + 0x20);
  std::sort(expected.begin(), expected.end(),
            [](const MetadataRecord& a, const MetadataRecord& b) { return a.code_pointer < b.code_pointer; });
  return out;
}

}  // namespace detail

// Lays out `functions` in the given order, encodes them and wraps them in the
// platform's container. Callees must all be among `functions`.
inline ForgedBinary link_binary(const std::vector<ForgeFunction>& functions, const BinaryMeta& meta,
                                const LinkOptions& opt = {}) {
  using detail::align_up;
  using detail::Segment;
  if (functions.empty()) throw Error(ErrorKind::InvariantViolation, "nothing to link");
  const BinaryFormat format = format_for(meta.platform);
  Rng rng(opt.seed ^ fnv1a64(meta.binary_id));

  std::vector<std::uint64_t> sizes;
  for (const auto& f : functions) sizes.push_back(4 * f.body.instruction_count());

  std::vector<Segment> segs;
  switch (format) {
    case BinaryFormat::ELF: segs.push_back({kElfText, kElfBase + kElfText, {}, {}}); break;
    case BinaryFormat::APP: segs.push_back({kAppCode, kAppCode, {}, {}}); break;
    case BinaryFormat::PE: segs.push_back({kPeHeaders, kPeImageBase + 0x1000, {}, {}}); break;
  }
  std::size_t split = functions.size();
  if (format == BinaryFormat::PE && opt.pe_split && functions.size() >= 2) split = 1 + rng.below(functions.size() - 1);
  std::uint64_t first_size = 0;
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (i == split) {
      segs.push_back({align_up(kPeHeaders + first_size, 0x200), kPeImageBase + 0x1000 + align_up(first_size, 0x1000),
                      {}, {}});
    }
    segs.back().functions.push_back(i);
    if (i < split) first_size += sizes[i];
  }

  std::map<std::string, std::uint64_t> entries;
  std::vector<std::uint64_t> entry_of(functions.size());
  for (auto& s : segs) {
    std::uint64_t a = s.address;
    for (std::size_t i : s.functions) {
      entry_of[i] = a;
      if (!entries.emplace(functions[i].name, a).second)
        throw Error(ErrorKind::InvariantViolation, "duplicate function name '" + functions[i].name + "'");
      a += sizes[i];
    }
  }
  std::map<std::string, std::string> ids;
  for (std::size_t i = 0; i < functions.size(); ++i) {
    const bool named = format != BinaryFormat::APP || functions[i].category == Category::Core;
    ids[functions[i].name] = named ? functions[i].name : address_id(entry_of[i]);
  }

  ForgedBinary out;
  Manifest& m = out.manifest;
  m.binary_id = meta.binary_id;
  m.program_id = meta.program_id;
  m.platform = meta.platform;
  m.label = meta.label;
  m.format = format;
  for (auto& s : segs) {
    LeWriter w;
    for (std::size_t i : s.functions) {
      const auto placed = detail::place(functions[i], entry_of[i], entries);
      for (const auto& p : placed) w.u32(p.in.word);
      m.functions.push_back(detail::expected_function(functions[i], entry_of[i], placed, ids));
    }
    s.code = w.bytes();
  }
  std::sort(m.functions.begin(), m.functions.end(),
            [](const ManifestFunction& a, const ManifestFunction& b) { return a.entry < b.entry; });
  for (const auto& f : m.functions)
    for (const auto& [k, v] : f.motifs) m.motifs[k] += v;

  std::vector<std::pair<std::string, std::uint64_t>> named;
  std::vector<std::uint64_t> named_sizes;
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (ids[functions[i].name].starts_with("sub_")) continue;
    named.emplace_back(functions[i].name, entry_of[i]);
    named_sizes.push_back(sizes[i]);
  }
  std::uint64_t entry = segs.front().address;
  if (auto it = entries.find(scheduler_name(meta.platform)); it != entries.end()) entry = it->second;

  switch (format) {
    case BinaryFormat::ELF: {
      m.base_address = kElfBase;
      out.bytes = detail::write_elf(segs[0], named, named_sizes, m.symbols, entry, opt.data_symbol, rng);
      break;
    }
    case BinaryFormat::PE: {
      m.base_address = kPeImageBase;
      std::vector<detail::PeSection> secs;
      for (std::size_t k = 0; k < segs.size(); ++k)
        secs.push_back({k == 0 ? ".text" : ".text2", static_cast<std::uint32_t>(segs[k].address - kPeImageBase),
                        static_cast<std::uint32_t>(segs[k].offset), static_cast<std::uint32_t>(segs[k].code.size()),
                        0x60000020, segs[k].code});
      out.bytes = detail::write_pe(std::move(secs), named, m.symbols, entry, opt, rng);
      break;
    }
    case BinaryFormat::APP: {
      m.base_address = 0;
      std::vector<std::pair<std::string, std::uint64_t>> records = named;
      if (opt.alias_record && !records.empty()) records.emplace_back(records.front().first + "_alias", records.front().second);
      out.bytes = detail::write_app(segs[0], records, m.records, meta);
      break;
    }
  }
  for (const auto& s : segs) m.code_regions.push_back({s.offset, s.code.size(), s.address});
  std::sort(m.symbols.begin(), m.symbols.end(), [](const Symbol& a, const Symbol& b) {
    return a.address != b.address ? a.address < b.address : a.name < b.name;
  });
  return out;
}

}  // namespace plcbinx::forge
