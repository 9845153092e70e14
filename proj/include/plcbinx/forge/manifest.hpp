#pragma once

// Ground truth for one forged binary and its comparison against recovery
// output.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/binloader.hpp"
#include "plcbinx/funcrec.hpp"

namespace plcbinx::forge {

using ojson = nlohmann::ordered_json;

struct ManifestInstr {
  std::uint64_t addr = 0;
  std::uint32_t word = 0;
  std::string text;
  bool operator==(const ManifestInstr&) const = default;
};

struct ManifestFunction {
  std::string id;
  std::string source_name;  // name before linking; differs from id only for unnamed functions
  std::uint64_t entry = 0;
  std::uint64_t size = 0;
  Category category = Category::Runtime;
  bool named = true;
  std::vector<ManifestInstr> instructions;
  std::vector<std::pair<std::uint64_t, std::size_t>> blocks;  // (start, instruction count)
  std::vector<CfgEdge> edges;
  std::vector<CallSite> calls;
  std::map<std::string, int> motifs;
  bool operator==(const ManifestFunction&) const = default;
};

struct Manifest {
  std::string binary_id;
  std::string program_id;
  Platform platform = Platform::GEB;
  std::string label;
  BinaryFormat format = BinaryFormat::ELF;
  std::uint64_t base_address = 0;
  std::vector<CodeRegion> code_regions;
  std::vector<Symbol> symbols;  // as the loader reports them
  std::vector<MetadataRecord> records;
  std::vector<ManifestFunction> functions;  // ordered by entry
  std::map<std::string, int> motifs;        // totals over core functions
  bool operator==(const Manifest&) const = default;

  std::size_t core_count() const {
    std::size_t n = 0;
    for (const auto& f : functions) n += f.category == Category::Core;
    return n;
  }
};

inline const char* call_kind_name(CallKind k) {
  switch (k) {
    case CallKind::DirectResolved: return "resolved";
    case CallKind::DirectUnresolved: return "unresolved";
    case CallKind::Indirect: return "indirect";
  }
  return "?";
}

inline ojson to_json(const Manifest& m) {
  ojson j;
  j["binary_id"] = m.binary_id;
  j["program_id"] = m.program_id;
  j["platform"] = to_string(m.platform);
  j["functionality"] = m.label;
  j["format"] = to_string(m.format);
  j["base_address"] = m.base_address;
  j["code_regions"] = ojson::array();
  for (const auto& r : m.code_regions)
    j["code_regions"].push_back({{"offset", r.offset}, {"length", r.length}, {"address", r.address}});
  j["symbols"] = ojson::array();
  for (const auto& s : m.symbols)
    j["symbols"].push_back({{"name", s.name}, {"address", s.address}, {"is_code", s.is_code}});
  j["records"] = ojson::array();
  for (const auto& r : m.records)
    j["records"].push_back({{"name", r.name}, {"code_pointer", r.code_pointer}, {"raw_offset", r.raw_offset}});
  j["motifs"] = m.motifs;
  j["functions"] = ojson::array();
  for (const auto& f : m.functions) {
    ojson o;
    o["id"] = f.id;
    o["source_name"] = f.source_name;
    o["entry"] = f.entry;
    o["size"] = f.size;
    o["category"] = to_string(f.category);
    o["named"] = f.named;
    o["instructions"] = ojson::array();
    for (const auto& i : f.instructions) o["instructions"].push_back({i.addr, i.word, i.text});
    o["blocks"] = ojson::array();
    for (auto [s, n] : f.blocks) o["blocks"].push_back({s, n});
    o["edges"] = ojson::array();
    for (const auto& e : f.edges) o["edges"].push_back({e.src, e.dst, to_string(e.kind)});
    o["calls"] = ojson::array();
    for (const auto& c : f.calls) {
      ojson co{{"at", c.at}, {"kind", call_kind_name(c.kind)}};
      if (c.kind == CallKind::DirectResolved) co["name"] = c.name;
      if (c.kind == CallKind::DirectUnresolved) co["target"] = c.target;
      co["tail"] = c.tail;
      o["calls"].push_back(std::move(co));
    }
    if (!f.motifs.empty()) o["motifs"] = f.motifs;
    j["functions"].push_back(std::move(o));
  }
  return j;
}

inline Manifest manifest_from_json(const ojson& j) {
  try {
    Manifest m;
    m.binary_id = j.at("binary_id").get<std::string>();
    m.program_id = j.at("program_id").get<std::string>();
    auto plat = parse_platform(j.at("platform").get<std::string>());
    if (!plat) throw Error(ErrorKind::SchemaViolation, "manifest: unknown platform");
    m.platform = *plat;
    m.label = j.at("functionality").get<std::string>();
    const auto fmt = j.at("format").get<std::string>();
    m.format = fmt == "ELF" ? BinaryFormat::ELF : fmt == "PE" ? BinaryFormat::PE : BinaryFormat::APP;
    m.base_address = j.at("base_address").get<std::uint64_t>();
    for (const auto& r : j.at("code_regions"))
      m.code_regions.push_back({r.at("offset"), r.at("length"), r.at("address")});
    for (const auto& s : j.at("symbols")) m.symbols.push_back({s.at("name"), s.at("address"), s.at("is_code")});
    for (const auto& r : j.at("records")) m.records.push_back({r.at("name"), r.at("code_pointer"), r.at("raw_offset")});
    m.motifs = j.at("motifs").get<std::map<std::string, int>>();
    for (const auto& o : j.at("functions")) {
      ManifestFunction f;
      f.id = o.at("id");
      f.source_name = o.at("source_name");
      f.entry = o.at("entry");
      f.size = o.at("size");
      f.category = o.at("category").get<std::string>() == "core" ? Category::Core : Category::Runtime;
      f.named = o.at("named");
      for (const auto& i : o.at("instructions")) f.instructions.push_back({i.at(0), i.at(1), i.at(2)});
      for (const auto& b : o.at("blocks")) f.blocks.emplace_back(b.at(0), b.at(1));
      for (const auto& e : o.at("edges")) {
        const auto k = e.at(2).get<std::string>();
        f.edges.push_back({e.at(0), e.at(1),
                           k == "taken" ? EdgeKind::Taken : k == "uncond" ? EdgeKind::Unconditional
                                                                           : EdgeKind::Fallthrough});
      }
      for (const auto& c : o.at("calls")) {
        CallSite cs;
        cs.at = c.at("at");
        const auto k = c.at("kind").get<std::string>();
        cs.kind = k == "resolved" ? CallKind::DirectResolved
                  : k == "indirect" ? CallKind::Indirect : CallKind::DirectUnresolved;
        cs.name = c.value("name", "");
        cs.target = c.value("target", std::uint64_t{0});
        cs.tail = c.at("tail");
        f.calls.push_back(std::move(cs));
      }
      if (o.contains("motifs")) f.motifs = o.at("motifs").get<std::map<std::string, int>>();
      m.functions.push_back(std::move(f));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("manifest: ") + e.what());
  }
}

struct CompareOptions {
  bool structure = true;   // instructions, blocks, edges, calls
  bool categories = true;  // requires a classified record
};

// Differences between a recovered record and the manifest, one line each.
inline std::vector<std::string> compare_record(const FunctionProgramRecord& rec, const Manifest& m,
                                               const CompareOptions& opt = {}) {
  std::vector<std::string> diffs;
  auto note = [&](const std::string& fn, const std::string& what) { diffs.push_back(m.binary_id + " " + fn + ": " + what); };
  std::map<std::uint64_t, const RecoveredFunction*> by_entry;
  for (const auto& f : rec.functions) by_entry.emplace(f.entry, &f);
  for (const auto& e : m.functions) {
    auto it = by_entry.find(e.entry);
    if (it == by_entry.end()) {
      note(e.id, "missing entry 0x" + hex_lower(e.entry));
      continue;
    }
    const RecoveredFunction& f = *it->second;
    if (f.id != e.id) note(e.id, "recovered id '" + f.id + "'");
    if (f.named != e.named) note(e.id, "named flag");
    if (opt.categories && f.category != e.category)
      note(e.id, std::string("category ") + to_string(f.category) + " vs " + to_string(e.category));
    if (!opt.structure) continue;
    if (f.size_bytes != e.size) note(e.id, "size " + std::to_string(f.size_bytes) + " vs " + std::to_string(e.size));
    if (f.instructions.size() != e.instructions.size()) {
      note(e.id, "instruction count");
    } else {
      for (std::size_t i = 0; i < e.instructions.size(); ++i) {
        const auto& a = f.instructions[i];
        const auto& b = e.instructions[i];
        if (a.address != b.addr || a.raw != b.word || a.text() != b.text) {
          note(e.id, "instruction at 0x" + hex_lower(b.addr) + ": '" + a.text() + "' vs '" + b.text + "'");
          break;
        }
      }
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> blocks;
    for (const auto& b : f.blocks) blocks.emplace_back(b.start, b.size());
    if (blocks != e.blocks) note(e.id, "block structure");
    auto ea = f.edges, eb = e.edges;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    if (ea != eb) note(e.id, "edges");
    if (f.calls != e.calls) note(e.id, "calls");
  }
  for (const auto& f : rec.functions) {
    bool known = std::any_of(m.functions.begin(), m.functions.end(), [&](const auto& e) { return e.entry == f.entry; });
    if (!known) note(f.id, "unexpected function at 0x" + hex_lower(f.entry));
  }
  return diffs;
}

// Loader-level differences: code regions, symbols and metadata records.
// `region_slack` allows probed regions to differ by up to that many bytes at
// each end.
inline std::vector<std::string> compare_image(const LoadedImage& img, const Manifest& m,
                                              std::uint64_t region_slack = 0) {
  std::vector<std::string> diffs;
  auto note = [&](const std::string& what) { diffs.push_back(m.binary_id + ": " + what); };
  if (img.code_regions.size() != m.code_regions.size()) {
    note("code region count " + std::to_string(img.code_regions.size()) + " vs " +
         std::to_string(m.code_regions.size()));
  } else {
    for (std::size_t i = 0; i < m.code_regions.size(); ++i) {
      const auto& a = img.code_regions[i];
      const auto& b = m.code_regions[i];
      auto far = [&](std::uint64_t x, std::uint64_t y) { return (x > y ? x - y : y - x) > region_slack; };
      if (far(a.offset, b.offset) || far(a.offset + a.length, b.offset + b.length) ||
          a.address - a.offset != b.address - b.offset)
        note("code region " + std::to_string(i) + " [0x" + hex_lower(a.offset) + ", +0x" + hex_lower(a.length) +
             ") vs [0x" + hex_lower(b.offset) + ", +0x" + hex_lower(b.length) + ")");
    }
  }
  auto sorted = [](std::vector<Symbol> v) {
    std::sort(v.begin(), v.end(), [](const Symbol& a, const Symbol& b) {
      return a.address != b.address ? a.address < b.address : a.name < b.name;
    });
    return v;
  };
  if (sorted(img.symbols) != sorted(m.symbols)) note("symbols");
  if (img.metadata_records != m.records) note("metadata records");
  if (img.base_address != m.base_address) note("base address");
  return diffs;
}

}  // namespace plcbinx::forge
