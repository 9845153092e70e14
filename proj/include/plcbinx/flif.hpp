#pragma once

// FLIF: the JSON interchange form of a FunctionProgramRecord. Field order is
// fixed and the export is byte-stable for identical records.

#include <string>

#include "json.hpp"
#include "plcbinx/funcrec.hpp"

namespace plcbinx {

using ojson = nlohmann::ordered_json;

inline constexpr int kFlifVersion = 1;

namespace flif_detail {

inline std::string call_kind(const CallSite& c) {
  switch (c.kind) {
    case CallKind::DirectResolved: return c.tail ? "tail_resolved" : "direct_resolved";
    case CallKind::DirectUnresolved: return c.tail ? "tail_unresolved" : "direct_unresolved";
    case CallKind::Indirect: return "indirect";
  }
  return "?";
}

[[noreturn]] inline void violation(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::SchemaViolation, path + ": " + what);
}

inline const ojson& field(const ojson& j, const char* key, const std::string& path) {
  if (!j.is_object()) violation(path, "expected object");
  auto it = j.find(key);
  if (it == j.end()) violation(path + "/" + key, "missing field");
  return *it;
}

inline std::uint64_t uint_field(const ojson& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    violation(path + "/" + key, "expected non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string str_field(const ojson& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_string()) violation(path + "/" + key, "expected string");
  return v.get<std::string>();
}

inline std::optional<std::string> opt_str_field(const ojson& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) violation(path + "/" + key, "expected string or null");
  return v.get<std::string>();
}

inline const ojson& array_field(const ojson& j, const char* key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_array()) violation(path + "/" + key, "expected array");
  return v;
}

// Operand classes from syntactic shape, for instructions the decoder does not
// reproduce (externally produced extractions).
inline Instr instr_from_text(std::uint64_t addr, std::uint32_t raw, const std::string& text) {
  Instr in;
  in.address = addr;
  in.raw = raw;
  const auto sp = text.find(' ');
  in.mnemonic = text.substr(0, sp);
  if (sp == std::string::npos) return in;
  in.op_str = text.substr(sp + 1);
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    std::string t = cur;
    while (!t.empty() && t.front() == ' ') t.erase(t.begin());
    cur.clear();
    if (t.empty()) return;
    if (t.front() == '{') t.erase(t.begin());
    if (!t.empty() && t.back() == '}') t.pop_back();
    if (t.empty()) return;
    OperandClass cls = OperandClass::Reg;
    if (t.front() == '[') cls = OperandClass::Mem;
    else if (t.front() == '#') cls = OperandClass::Imm;
    in.operands.push_back({cls, t});
  };
  for (char c : in.op_str) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      flush();
      continue;
    }
    cur.push_back(c);
  }
  flush();
  return in;
}

}  // namespace flif_detail

inline ojson flif_to_json(const FunctionProgramRecord& rec) {
  ojson j;
  j["flif_version"] = kFlifVersion;
  j["binary_id"] = rec.binary_id;
  j["program_id"] = rec.program_id;
  j["platform_label"] = rec.platform_label ? ojson(to_string(*rec.platform_label)) : ojson(nullptr);
  j["functionality_label"] = rec.functionality_label ? ojson(*rec.functionality_label) : ojson(nullptr);
  ojson fns = ojson::array();
  for (const auto& fn : rec.functions) {
    ojson f;
    f["id"] = fn.id;
    f["entry"] = fn.entry;
    f["size_bytes"] = fn.size_bytes;
    f["category"] = to_string(fn.category);
    ojson ins = ojson::array();
    for (const auto& in : fn.instructions) {
      ojson i;
      i["addr"] = in.address;
      i["raw"] = in.raw;
      i["text"] = in.text();
      ins.push_back(std::move(i));
    }
    f["instructions"] = std::move(ins);
    ojson blocks = ojson::array();
    for (const auto& b : fn.blocks) {
      ojson o;
      o["start"] = b.start;
      o["lo"] = b.lo;
      o["hi"] = b.hi;
      blocks.push_back(std::move(o));
    }
    f["blocks"] = std::move(blocks);
    ojson edges = ojson::array();
    for (const auto& e : fn.edges) edges.push_back(ojson::array({e.src, e.dst, to_string(e.kind)}));
    f["edges"] = std::move(edges);
    ojson calls = ojson::array();
    for (const auto& c : fn.calls) {
      ojson o;
      o["at"] = c.at;
      o["kind"] = flif_detail::call_kind(c);
      if (c.kind == CallKind::DirectResolved) o["target"] = c.name;
      else if (c.kind == CallKind::DirectUnresolved) o["target"] = c.target;
      else o["target"] = nullptr;
      calls.push_back(std::move(o));
    }
    f["calls"] = std::move(calls);
    fns.push_back(std::move(f));
  }
  j["functions"] = std::move(fns);
  return j;
}

inline std::string export_flif(const FunctionProgramRecord& rec) { return flif_to_json(rec).dump() + "\n"; }

inline FunctionProgramRecord flif_from_json(const ojson& j) {
  using namespace flif_detail;
  const std::string root;
  if (!j.is_object()) violation("", "expected object");
  if (uint_field(j, "flif_version", root) != kFlifVersion) violation("/flif_version", "unsupported version");

  FunctionProgramRecord rec;
  rec.binary_id = str_field(j, "binary_id", root);
  rec.program_id = str_field(j, "program_id", root);
  if (auto p = opt_str_field(j, "platform_label", root)) {
    rec.platform_label = parse_platform(*p);
    if (!rec.platform_label) violation("/platform_label", "unknown platform '" + *p + "'");
  }
  rec.functionality_label = opt_str_field(j, "functionality_label", root);

  const auto& fns = array_field(j, "functions", root);
  std::set<std::string> ids;
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    const std::string fp = "/functions/" + std::to_string(fi);
    const auto& f = fns[fi];
    RecoveredFunction fn;
    fn.id = str_field(f, "id", fp);
    if (!ids.insert(fn.id).second) violation(fp + "/id", "duplicate function id '" + fn.id + "'");
    fn.entry = uint_field(f, "entry", fp);
    fn.size_bytes = uint_field(f, "size_bytes", fp);
    const std::string cat = str_field(f, "category", fp);
    if (cat == "core") fn.category = Category::Core;
    else if (cat == "runtime") fn.category = Category::Runtime;
    else if (cat == "unassigned") fn.category = Category::Unassigned;
    else violation(fp + "/category", "unknown category '" + cat + "'");

    const auto& ins = array_field(f, "instructions", fp);
    for (std::size_t ii = 0; ii < ins.size(); ++ii) {
      const std::string ip = fp + "/instructions/" + std::to_string(ii);
      const std::uint64_t addr = uint_field(ins[ii], "addr", ip);
      const std::uint64_t raw = uint_field(ins[ii], "raw", ip);
      const std::string text = str_field(ins[ii], "text", ip);
      if (addr % 4 != 0) violation(ip + "/addr", "unaligned address");
      if (raw > 0xFFFFFFFFull) violation(ip + "/raw", "not a 32-bit word");
      if (ii && addr <= fn.instructions.back().address) violation(ip + "/addr", "addresses must increase");
      const auto w = static_cast<std::uint32_t>(raw);
      auto decoded = decode(w, addr);
      if (decoded && decoded->text() == text) fn.instructions.push_back(std::move(*decoded));
      else if (text == "undef") fn.instructions.push_back(make_undef(w, addr));
      else fn.instructions.push_back(instr_from_text(addr, w, text));
    }
    if (fn.size_bytes != 4 * fn.instructions.size()) violation(fp + "/size_bytes", "must equal 4 * instruction count");
    if (!fn.instructions.empty() && fn.instructions.front().address != fn.entry)
      violation(fp + "/entry", "entry must be the first instruction address");

    const auto& blocks = array_field(f, "blocks", fp);
    std::size_t expect = 0;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const std::string bp = fp + "/blocks/" + std::to_string(bi);
      BasicBlock b;
      b.start = uint_field(blocks[bi], "start", bp);
      b.lo = uint_field(blocks[bi], "lo", bp);
      b.hi = uint_field(blocks[bi], "hi", bp);
      if (b.lo != expect || b.hi <= b.lo || b.hi > fn.instructions.size())
        violation(bp, "blocks must partition the instruction list");
      if (b.start != fn.instructions[b.lo].address) violation(bp + "/start", "must equal the first instruction address");
      expect = b.hi;
      fn.blocks.push_back(b);
    }
    if (expect != fn.instructions.size()) violation(fp + "/blocks", "blocks must cover every instruction");

    const auto& edges = array_field(f, "edges", fp);
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
      const std::string ep = fp + "/edges/" + std::to_string(ei);
      const auto& e = edges[ei];
      if (!e.is_array() || e.size() != 3) violation(ep, "expected [src, dst, kind]");
      for (int k = 0; k < 2; ++k) {
        if (!e[k].is_number_unsigned() || e[k].get<std::uint64_t>() >= fn.blocks.size())
          violation(ep + "/" + std::to_string(k), "block index out of range");
      }
      if (!e[2].is_string()) violation(ep + "/2", "expected edge kind");
      const auto kind = e[2].get<std::string>();
      CfgEdge edge{e[0].get<std::size_t>(), e[1].get<std::size_t>(), EdgeKind::Fallthrough};
      if (kind == "taken") edge.kind = EdgeKind::Taken;
      else if (kind == "uncond") edge.kind = EdgeKind::Unconditional;
      else if (kind != "fallthrough") violation(ep + "/2", "unknown edge kind '" + kind + "'");
      fn.edges.push_back(edge);
    }

    const auto& calls = array_field(f, "calls", fp);
    for (std::size_t ci = 0; ci < calls.size(); ++ci) {
      const std::string cp = fp + "/calls/" + std::to_string(ci);
      CallSite c;
      c.at = uint_field(calls[ci], "at", cp);
      const std::string kind = str_field(calls[ci], "kind", cp);
      const auto& target = field(calls[ci], "target", cp);
      if (kind == "direct_resolved" || kind == "tail_resolved") {
        if (!target.is_string()) violation(cp + "/target", "resolved call needs a name");
        c.kind = CallKind::DirectResolved;
        c.name = target.get<std::string>();
      } else if (kind == "direct_unresolved" || kind == "tail_unresolved") {
        if (!target.is_number_unsigned()) violation(cp + "/target", "unresolved call needs an address");
        c.kind = CallKind::DirectUnresolved;
        c.target = target.get<std::uint64_t>();
      } else if (kind == "indirect") {
        if (!target.is_null()) violation(cp + "/target", "indirect call has no target");
        c.kind = CallKind::Indirect;
      } else {
        violation(cp + "/kind", "unknown call kind '" + kind + "'");
      }
      c.tail = kind.starts_with("tail") || kind == "indirect";
      fn.calls.push_back(std::move(c));
    }

    for (std::size_t b = 0; b < fn.blocks.size(); ++b) fn.blocks[b].terminator = derive_terminator(fn, b);
    fn.named = fn.id != address_id(fn.entry);
    if (auto bad = check_function(fn)) violation(fp, *bad);
    rec.functions.push_back(std::move(fn));
  }

  return rec;
}

inline FunctionProgramRecord import_flif(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("/: invalid JSON: ") + e.what());
  }
  return flif_from_json(j);
}

}  // namespace plcbinx
