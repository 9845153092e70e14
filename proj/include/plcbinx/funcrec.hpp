#pragma once

// Function boundary, basic block and call recovery over linearly swept code,
// producing the per-binary function-level record.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "plcbinx/binloader.hpp"
#include "plcbinx/common.hpp"
#include "plcbinx/disasm.hpp"

namespace plcbinx {

enum class EdgeKind { Fallthrough, Taken, Unconditional };
enum class TerminatorKind { Cond, Uncond, Return, CallFallthrough, Straight, TailCall };
enum class Category { Unassigned, Core, Runtime };
enum class CallKind { DirectResolved, DirectUnresolved, Indirect };
enum class Platform { CODESYSv3, GEB, OpenPLCv2, OpenPLCv3 };

inline constexpr Platform kAllPlatforms[] = {Platform::CODESYSv3, Platform::GEB, Platform::OpenPLCv2,
                                             Platform::OpenPLCv3};

inline const char* to_string(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return "CODESYSv3";
    case Platform::GEB: return "GEB";
    case Platform::OpenPLCv2: return "OpenPLCv2";
    case Platform::OpenPLCv3: return "OpenPLCv3";
  }
  return "?";
}

inline std::optional<Platform> parse_platform(std::string_view s) {
  for (Platform p : kAllPlatforms)
    if (s == to_string(p)) return p;
  return std::nullopt;
}

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Unassigned: return "unassigned";
    case Category::Core: return "core";
    case Category::Runtime: return "runtime";
  }
  return "?";
}

inline const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Fallthrough: return "fallthrough";
    case EdgeKind::Taken: return "taken";
    case EdgeKind::Unconditional: return "uncond";
  }
  return "?";
}

struct BasicBlock {
  std::uint64_t start = 0;
  std::size_t lo = 0, hi = 0;  // instruction index range [lo, hi)
  TerminatorKind terminator = TerminatorKind::Straight;
  std::size_t size() const { return hi - lo; }
  bool operator==(const BasicBlock&) const = default;
};

struct CfgEdge {
  std::size_t src = 0, dst = 0;
  EdgeKind kind = EdgeKind::Fallthrough;
  bool operator==(const CfgEdge&) const = default;
  auto operator<=>(const CfgEdge&) const = default;
};

struct CallSite {
  std::uint64_t at = 0;
  CallKind kind = CallKind::DirectUnresolved;
  std::uint64_t target = 0;  // DirectUnresolved only
  std::string name;          // DirectResolved only
  bool tail = false;         // branch out of the function rather than a call
  bool operator==(const CallSite&) const = default;
};

struct RecoveredFunction {
  std::string id;
  std::uint64_t entry = 0;
  std::uint64_t size_bytes = 0;
  std::vector<Instr> instructions;
  std::vector<BasicBlock> blocks;
  std::vector<CfgEdge> edges;
  std::vector<CallSite> calls;
  Category category = Category::Unassigned;
  bool named = false;  // id came from a symbol or metadata record

  bool operator==(const RecoveredFunction&) const = default;
};

struct FunctionProgramRecord {
  std::string binary_id;
  std::string program_id;
  std::optional<Platform> platform_label;
  std::optional<std::string> functionality_label;
  std::vector<RecoveredFunction> functions;

  bool operator==(const FunctionProgramRecord&) const = default;
};

using Diagnostics = std::vector<std::string>;

inline std::string address_id(std::uint64_t entry) { return "sub_" + hex8(entry); }

// Address lookup over the instruction streams of all swept code regions.
class InstrIndex {
 public:
  void add_stream(std::vector<Instr> stream) {
    if (stream.empty()) return;
    streams_.push_back(std::move(stream));
  }
  const Instr* at(std::uint64_t addr) const {
    for (const auto& s : streams_) {
      const std::uint64_t lo = s.front().address;
      if (addr < lo || addr % 4 != 0) continue;
      const std::uint64_t i = (addr - lo) / 4;
      if (i < s.size()) return &s[i];
    }
    return nullptr;
  }
  // End address (exclusive) of the stream containing addr.
  std::uint64_t stream_end(std::uint64_t addr) const {
    for (const auto& s : streams_)
      if (addr >= s.front().address && addr <= s.back().address) return s.back().address + 4;
    return addr;
  }
  std::vector<Instr> all() const {
    std::vector<Instr> out;
    for (const auto& s : streams_) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

 private:
  std::vector<std::vector<Instr>> streams_;
};

inline InstrIndex sweep_image(const LoadedImage& image, const IsaDecoder& isa = default_decoder()) {
  InstrIndex idx;
  for (const auto& r : image.code_regions)
    idx.add_stream(linear_sweep(ByteView(image.bytes).subspan(r.offset, r.length), r.address, isa));
  return idx;
}

inline bool is_prologue(const Instr& in) {
  return in.kind == InstrKind::PushPop && (in.mnemonic.starts_with("push") || in.mnemonic.starts_with("stmdb")) &&
         (in.reglist & (1u << arm::kLr));
}

inline std::vector<std::uint64_t> find_entries(const std::vector<Instr>& instrs, const LoadedImage& image) {
  std::set<std::uint64_t> entries;
  for (const auto& in : instrs) {
    if (is_prologue(in)) entries.insert(in.address);
    if (in.kind == InstrKind::BranchLink && in.branch_target && image.is_code_address(*in.branch_target))
      entries.insert(*in.branch_target);
  }
  for (const auto& s : image.symbols)
    if (s.is_code && s.address % 4 == 0 && image.is_code_address(s.address)) entries.insert(s.address);
  for (const auto& r : image.metadata_records) {
    const std::uint64_t a = image.base_address + r.code_pointer;
    if (image.is_code_address(a)) entries.insert(a);
  }
  return {entries.begin(), entries.end()};
}

// Terminator of a block, derived from its last instruction and outgoing edges.
inline TerminatorKind derive_terminator(const RecoveredFunction& fn, std::size_t block) {
  const auto& b = fn.blocks[block];
  const Instr& last = fn.instructions[b.hi - 1];
  bool taken = false, uncond = false;
  for (const auto& e : fn.edges) {
    if (e.src != block) continue;
    taken |= e.kind == EdgeKind::Taken;
    uncond |= e.kind == EdgeKind::Unconditional;
  }
  switch (last.kind) {
    case InstrKind::BranchLink: return TerminatorKind::CallFallthrough;
    case InstrKind::Branch:
      if (taken || last.conditional()) return TerminatorKind::Cond;
      return uncond ? TerminatorKind::Uncond : TerminatorKind::TailCall;
    case InstrKind::Return:
    case InstrKind::IndirectTransfer: return last.conditional() ? TerminatorKind::Cond : TerminatorKind::Return;
    default:
      if (taken) return TerminatorKind::Cond;
      if (uncond) return TerminatorKind::Uncond;
      return TerminatorKind::Straight;
  }
}

inline RecoveredFunction recover_function(std::uint64_t entry, const std::vector<std::uint64_t>& entries,
                                          const InstrIndex& index) {
  const Instr* first = index.at(entry);
  if (!first || first->is_undef())
    throw Error(ErrorKind::DanglingEntry, "entry 0x" + hex_lower(entry) + " does not hold a decodable instruction");

  auto next = std::upper_bound(entries.begin(), entries.end(), entry);
  const std::uint64_t limit = std::min(next == entries.end() ? UINT64_MAX : *next, index.stream_end(entry));
  auto inside = [&](std::uint64_t a) { return a >= entry && a < limit; };
  auto other_entry = [&](std::uint64_t a) { return a != entry && std::binary_search(entries.begin(), entries.end(), a); };

  std::set<std::uint64_t> covered, intra_targets;
  std::vector<CallSite> calls;
  std::vector<std::uint64_t> work{entry};
  while (!work.empty()) {
    std::uint64_t addr = work.back();
    work.pop_back();
    while (inside(addr) && !covered.contains(addr)) {
      const Instr* in = index.at(addr);
      if (!in) break;
      covered.insert(addr);
      bool falls = true;
      switch (in->kind) {
        case InstrKind::Return: falls = in->conditional(); break;
        case InstrKind::IndirectTransfer:
          calls.push_back({addr, CallKind::Indirect, 0, {}, true});
          falls = in->conditional();
          break;
        case InstrKind::BranchLink: calls.push_back({addr, CallKind::DirectUnresolved, *in->branch_target, {}, false}); break;
        case InstrKind::Branch: {
          const std::uint64_t t = *in->branch_target;
          if (other_entry(t) || !inside(t) || !index.at(t)) {
            calls.push_back({addr, CallKind::DirectUnresolved, t, {}, true});
          } else {
            intra_targets.insert(t);
            work.push_back(t);
          }
          falls = in->conditional();
          break;
        }
        default: break;
      }
      if (!falls) break;
      addr += 4;
    }
  }

  RecoveredFunction fn;
  fn.id = address_id(entry);
  fn.entry = entry;
  for (std::uint64_t a : covered) fn.instructions.push_back(*index.at(a));
  fn.size_bytes = 4 * fn.instructions.size();
  if (std::all_of(fn.instructions.begin(), fn.instructions.end(), [](const Instr& i) { return i.is_undef(); }))
    throw Error(ErrorKind::DanglingEntry, "body at 0x" + hex_lower(entry) + " holds only undecodable words");

  // Blocks start at the entry, at intra-function targets, after control
  // transfers and wherever the covered range has a gap.
  std::map<std::uint64_t, std::size_t> block_at;
  for (std::size_t i = 0; i < fn.instructions.size(); ++i) {
    const auto& in = fn.instructions[i];
    const bool leader = i == 0 || intra_targets.contains(in.address) ||
                        fn.instructions[i - 1].address + 4 != in.address ||
                        fn.instructions[i - 1].is_control_transfer();
    if (leader) {
      if (!fn.blocks.empty()) fn.blocks.back().hi = i;
      block_at[in.address] = fn.blocks.size();
      fn.blocks.push_back({in.address, i, i + 1, TerminatorKind::Straight});
    }
  }
  if (!fn.blocks.empty()) fn.blocks.back().hi = fn.instructions.size();

  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    const Instr& last = fn.instructions[fn.blocks[b].hi - 1];
    const std::uint64_t after = last.address + 4;
    auto fallthrough = [&] {
      auto it = block_at.find(after);
      if (it != block_at.end()) fn.edges.push_back({b, it->second, EdgeKind::Fallthrough});
    };
    switch (last.kind) {
      case InstrKind::Branch: {
        auto it = block_at.find(*last.branch_target);
        const bool intra = it != block_at.end() && intra_targets.contains(*last.branch_target);
        if (intra) fn.edges.push_back({b, it->second, last.conditional() ? EdgeKind::Taken : EdgeKind::Unconditional});
        if (last.conditional()) fallthrough();
        break;
      }
      case InstrKind::Return:
      case InstrKind::IndirectTransfer:
        if (last.conditional()) fallthrough();
        break;
      default: fallthrough(); break;
    }
  }
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) fn.blocks[b].terminator = derive_terminator(fn, b);

  std::sort(calls.begin(), calls.end(), [](const CallSite& a, const CallSite& b) { return a.at < b.at; });
  fn.calls = std::move(calls);
  return fn;
}

// Name map from code addresses; symbols first, then metadata records, first one wins.
inline std::map<std::uint64_t, std::string> name_map(const LoadedImage& image, Diagnostics* diags = nullptr) {
  std::map<std::uint64_t, std::string> names;
  auto add = [&](std::uint64_t addr, const std::string& name) {
    if (!image.is_code_address(addr)) return;
    auto [it, inserted] = names.try_emplace(addr, name);
    if (!inserted && it->second != name && diags)
      diags->push_back("NameCollision: 0x" + hex_lower(addr) + " keeps '" + it->second + "', drops '" + name + "'");
  };
  for (const auto& s : image.symbols)
    if (s.is_code) add(s.address, s.name);
  for (const auto& r : image.metadata_records) add(image.base_address + r.code_pointer, r.name);
  return names;
}

inline void assign_names(std::vector<RecoveredFunction>& functions, const LoadedImage& image,
                         Diagnostics* diags = nullptr) {
  const auto names = name_map(image, diags);
  for (auto& fn : functions) {
    auto it = names.find(fn.entry);
    fn.id = it != names.end() ? it->second : address_id(fn.entry);
    fn.named = fn.id != address_id(fn.entry);
    for (auto& c : fn.calls) {
      if (c.kind == CallKind::Indirect) continue;
      auto t = names.find(c.target);
      if (t != names.end()) {
        c.kind = CallKind::DirectResolved;
        c.name = t->second;
        c.target = 0;
      } else {
        c.kind = CallKind::DirectUnresolved;
        c.name.clear();
      }
    }
  }
}

struct RecordLabels {
  std::string binary_id;
  std::string program_id;
  std::optional<Platform> platform;
  std::optional<std::string> functionality;
};

inline FunctionProgramRecord build_record(std::vector<RecoveredFunction> functions, const RecordLabels& labels,
                                          Diagnostics* diags = nullptr) {
  FunctionProgramRecord rec;
  rec.binary_id = labels.binary_id;
  rec.program_id = labels.program_id;
  rec.platform_label = labels.platform;
  rec.functionality_label = labels.functionality;
  std::sort(functions.begin(), functions.end(),
            [](const RecoveredFunction& a, const RecoveredFunction& b) { return a.entry < b.entry; });
  std::map<std::string, int> seen;
  for (auto& fn : functions) {
    const int n = ++seen[fn.id];
    if (n > 1) {
      if (diags) diags->push_back("DuplicateFunctionId: '" + fn.id + "' at 0x" + hex_lower(fn.entry));
      fn.id += "#" + std::to_string(n);
    }
  }
  rec.functions = std::move(functions);
  return rec;
}

// Full recovery for one loaded image.
inline FunctionProgramRecord recover_image(const LoadedImage& image, const RecordLabels& labels,
                                           Diagnostics* diags = nullptr) {
  const InstrIndex index = sweep_image(image);
  const auto entries = find_entries(index.all(), image);
  std::vector<RecoveredFunction> functions;
  for (std::uint64_t e : entries) {
    try {
      functions.push_back(recover_function(e, entries, index));
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::DanglingEntry) throw;
      if (diags) diags->push_back(err.what());
    }
  }
  assign_names(functions, image, diags);
  return build_record(std::move(functions), labels, diags);
}

// Structural invariants of a recovered function; returns a description of the
// first violation, if any.
inline std::optional<std::string> check_function(const RecoveredFunction& fn) {
  if (fn.size_bytes != 4 * fn.instructions.size()) return "size_bytes != 4 * instruction count";
  for (std::size_t i = 0; i < fn.instructions.size(); ++i) {
    if (fn.instructions[i].address % 4) return "unaligned instruction";
    if (i && fn.instructions[i].address <= fn.instructions[i - 1].address) return "instructions not increasing";
  }
  std::size_t expect = 0;
  for (const auto& b : fn.blocks) {
    if (b.lo != expect || b.hi <= b.lo || b.hi > fn.instructions.size()) return "blocks do not partition instructions";
    if (b.start != fn.instructions[b.lo].address) return "block start mismatch";
    for (std::size_t i = b.lo; i + 1 < b.hi; ++i)
      if (fn.instructions[i].is_control_transfer()) return "control transfer inside a block";
    expect = b.hi;
  }
  if (expect != fn.instructions.size()) return "blocks do not cover instructions";
  std::vector<int> out(fn.blocks.size(), 0);
  for (const auto& e : fn.edges) {
    if (e.src >= fn.blocks.size() || e.dst >= fn.blocks.size()) return "edge endpoint out of range";
    ++out[e.src];
  }
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    switch (fn.blocks[b].terminator) {
      case TerminatorKind::Cond:
        if (out[b] > 2) return "conditional block with out-degree > 2";
        break;
      case TerminatorKind::Uncond:
        if (out[b] != 1) return "unconditional block with out-degree != 1";
        break;
      case TerminatorKind::Return:
      case TerminatorKind::TailCall:
        if (out[b] != 0) return "exit block with successors";
        break;
      default:
        if (out[b] > 1) return "straight block with out-degree > 1";
    }
  }
  return std::nullopt;
}

}  // namespace plcbinx
