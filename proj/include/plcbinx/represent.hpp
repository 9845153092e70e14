#pragma once

// Function-level representations: normalized token sequences, attributed CFGs,
// function hashes and binary-level runtime fingerprints.

#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/funcrec.hpp"

namespace plcbinx {

using NameResolver = std::function<std::optional<std::string>(std::uint64_t at)>;

// Resolves call names from a function's recorded call sites.
inline NameResolver call_name_resolver(const RecoveredFunction& fn) {
  std::map<std::uint64_t, std::string> names;
  for (const auto& c : fn.calls)
    if (c.kind == CallKind::DirectResolved) names.emplace(c.at, c.name);
  return [names = std::move(names)](std::uint64_t at) -> std::optional<std::string> {
    auto it = names.find(at);
    if (it == names.end()) return std::nullopt;
    return it->second;
  };
}

inline std::vector<std::string> normalize(const Instr& in, const NameResolver& resolve = {}) {
  std::string mnemonic = in.mnemonic;
  for (auto& c : mnemonic) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (in.is_undef()) return {"undef"};

  auto call_token = [&]() -> std::string {
    if (resolve)
      if (auto name = resolve(in.address)) return "call_name:" + *name;
    return "call_addr";
  };

  switch (in.kind) {
    case InstrKind::BranchLink: return {mnemonic, call_token()};
    case InstrKind::IndirectTransfer: return {mnemonic, "call_indirect"};
    case InstrKind::Return: return {mnemonic};
    case InstrKind::Branch: {
      // Intra-function labels are dropped; branches that leave the function
      // keep their callee identity like calls do.
      if (resolve)
        if (auto name = resolve(in.address)) return {mnemonic, "call_name:" + *name};
      return {mnemonic};
    }
    default: break;
  }
  std::vector<std::string> out{mnemonic};
  for (const auto& op : in.operands) {
    switch (op.cls) {
      case OperandClass::Reg: out.push_back("reg"); break;
      case OperandClass::Imm: out.push_back("imm"); break;
      case OperandClass::Mem: out.push_back("mem"); break;
      case OperandClass::Label: break;
    }
  }
  return out;
}

struct TokenSeq {
  std::string function_id;
  std::vector<std::string> tokens;
  bool operator==(const TokenSeq&) const = default;
};

inline TokenSeq build_token_seq(const RecoveredFunction& fn) {
  TokenSeq seq{fn.id, {}};
  const auto resolve = call_name_resolver(fn);
  for (const auto& in : fn.instructions) {
    auto t = normalize(in, resolve);
    seq.tokens.insert(seq.tokens.end(), t.begin(), t.end());
  }
  return seq;
}

inline std::uint64_t hash_tokens(const std::vector<std::string>& tokens) {
  std::uint64_t h = kFnvOffsetBasis;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) h = fnv1a64("\n", h);
    h = fnv1a64(tokens[i], h);
  }
  return h;
}

inline std::uint64_t hash_function(const TokenSeq& seq) { return hash_tokens(seq.tokens); }

enum class BbLenBucket { B1_2, B3_8, B9_16, B17_32, B33Plus };
inline constexpr std::size_t kBbLenBuckets = 5;

inline BbLenBucket bb_len_bucket(std::size_t n) {
  if (n <= 2) return BbLenBucket::B1_2;
  if (n <= 8) return BbLenBucket::B3_8;
  if (n <= 16) return BbLenBucket::B9_16;
  if (n <= 32) return BbLenBucket::B17_32;
  return BbLenBucket::B33Plus;
}

inline const char* to_string(BbLenBucket b) {
  switch (b) {
    case BbLenBucket::B1_2: return "1-2";
    case BbLenBucket::B3_8: return "3-8";
    case BbLenBucket::B9_16: return "9-16";
    case BbLenBucket::B17_32: return "17-32";
    case BbLenBucket::B33Plus: return "33+";
  }
  return "?";
}

struct AcfgNode {
  std::vector<std::string> tokens;
  BbLenBucket bb_len = BbLenBucket::B1_2;
  std::uint32_t in_degree = 0, out_degree = 0;
  bool core = false;

  std::vector<std::string> feature_tokens() const {
    return {std::string("bb_len:") + to_string(bb_len), "bb_in:" + std::to_string(in_degree),
            "bb_out:" + std::to_string(out_degree), core ? "core_function" : "runtime_function"};
  }
  bool operator==(const AcfgNode&) const = default;
};

struct Acfg {
  std::string function_id;
  std::vector<AcfgNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  bool operator==(const Acfg&) const = default;
};

inline Acfg build_acfg(const RecoveredFunction& fn) {
  Acfg g;
  g.function_id = fn.id;
  const auto resolve = call_name_resolver(fn);
  g.nodes.resize(fn.blocks.size());
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    auto& node = g.nodes[b];
    const auto& blk = fn.blocks[b];
    for (std::size_t i = blk.lo; i < blk.hi; ++i) {
      auto t = normalize(fn.instructions[i], resolve);
      node.tokens.insert(node.tokens.end(), t.begin(), t.end());
    }
    node.bb_len = bb_len_bucket(blk.size());
    node.core = fn.category == Category::Core;
  }
  for (const auto& e : fn.edges) {
    g.edges.emplace_back(e.src, e.dst);
    ++g.nodes[e.src].out_degree;
    ++g.nodes[e.dst].in_degree;
  }
  return g;
}

inline constexpr std::size_t kSizeHistogramBuckets = 8;

inline std::size_t size_bucket(std::uint64_t bytes) {
  std::uint64_t bound = 16;
  for (std::size_t i = 0; i + 1 < kSizeHistogramBuckets; ++i, bound *= 2)
    if (bytes <= bound) return i;
  return kSizeHistogramBuckets - 1;
}

// Splits an identifier on `_` and lower/upper case boundaries; lowercased.
inline std::vector<std::string> split_identifier(std::string_view id) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (std::size_t i = 0; i < id.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(id[i]);
    if (c == '_' || c == '#') {
      flush();
      continue;
    }
    if (std::isupper(c) && !cur.empty()) {
      const unsigned char prev = static_cast<unsigned char>(id[i - 1]);
      const bool next_lower = i + 1 < id.size() && std::islower(static_cast<unsigned char>(id[i + 1]));
      if (std::islower(prev) || std::isdigit(prev) || (std::isupper(prev) && next_lower)) flush();
    }
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  return out;
}

enum class FunctionSelection { Core, Runtime, Both };

inline const char* to_string(FunctionSelection s) {
  switch (s) {
    case FunctionSelection::Core: return "core";
    case FunctionSelection::Runtime: return "runtime";
    case FunctionSelection::Both: return "both";
  }
  return "?";
}

inline std::optional<FunctionSelection> parse_selection(std::string_view s) {
  if (s == "core") return FunctionSelection::Core;
  if (s == "runtime") return FunctionSelection::Runtime;
  if (s == "both" || s == "core+runtime") return FunctionSelection::Both;
  return std::nullopt;
}

inline bool selected(const RecoveredFunction& fn, FunctionSelection sel) {
  switch (sel) {
    case FunctionSelection::Core: return fn.category == Category::Core;
    case FunctionSelection::Runtime: return fn.category != Category::Core;
    case FunctionSelection::Both: return true;
  }
  return false;
}

struct Fingerprint {
  std::string binary_id;
  std::set<std::uint64_t> function_hashes;
  std::uint32_t runtime_count = 0;
  std::array<std::uint32_t, kSizeHistogramBuckets> size_histogram{};
  std::map<std::string, std::uint32_t> name_tokens;
  bool operator==(const Fingerprint&) const = default;
};

inline Fingerprint build_fingerprint(const FunctionProgramRecord& rec,
                                     FunctionSelection sel = FunctionSelection::Runtime) {
  Fingerprint fp;
  fp.binary_id = rec.binary_id;
  for (const auto& fn : rec.functions) {
    if (!selected(fn, sel)) continue;
    fp.function_hashes.insert(hash_function(build_token_seq(fn)));
    ++fp.runtime_count;
    ++fp.size_histogram[size_bucket(fn.size_bytes)];
    if (fn.named)
      for (auto& t : split_identifier(fn.id)) ++fp.name_tokens[t];
  }
  return fp;
}

struct Representation {
  std::string binary_id;
  std::vector<TokenSeq> token_seqs;
  std::vector<Acfg> acfgs;
  Fingerprint fingerprint;
};

inline Representation build_representation(const FunctionProgramRecord& rec) {
  Representation r;
  r.binary_id = rec.binary_id;
  for (const auto& fn : rec.functions) {
    r.token_seqs.push_back(build_token_seq(fn));
    r.acfgs.push_back(build_acfg(fn));
  }
  r.fingerprint = build_fingerprint(rec);
  return r;
}

inline nlohmann::ordered_json representation_to_json(const Representation& r,
                                                     const FunctionProgramRecord& rec) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["binary_id"] = r.binary_id;
  oj seqs = oj::array();
  for (std::size_t i = 0; i < r.token_seqs.size(); ++i) {
    oj s;
    s["function_id"] = r.token_seqs[i].function_id;
    s["category"] = to_string(rec.functions[i].category);
    s["hash"] = "0x" + hex_lower(hash_function(r.token_seqs[i]));
    s["tokens"] = r.token_seqs[i].tokens;
    seqs.push_back(std::move(s));
  }
  j["token_seqs"] = std::move(seqs);
  oj acfgs = oj::array();
  for (const auto& g : r.acfgs) {
    oj a;
    a["function_id"] = g.function_id;
    oj nodes = oj::array();
    for (const auto& n : g.nodes) {
      oj o;
      o["tokens"] = n.tokens;
      o["features"] = n.feature_tokens();
      nodes.push_back(std::move(o));
    }
    a["nodes"] = std::move(nodes);
    oj edges = oj::array();
    for (auto [s, d] : g.edges) edges.push_back(oj::array({s, d}));
    a["edges"] = std::move(edges);
    acfgs.push_back(std::move(a));
  }
  j["acfgs"] = std::move(acfgs);
  oj fp;
  fp["binary_id"] = r.fingerprint.binary_id;
  oj hashes = oj::array();
  for (auto h : r.fingerprint.function_hashes) hashes.push_back("0x" + hex_lower(h));
  fp["function_hashes"] = std::move(hashes);
  fp["runtime_count"] = r.fingerprint.runtime_count;
  fp["size_histogram"] = r.fingerprint.size_histogram;
  oj names = oj::object();
  for (const auto& [t, n] : r.fingerprint.name_tokens) names[t] = n;
  fp["name_tokens"] = std::move(names);
  j["fingerprint"] = std::move(fp);
  return j;
}

}  // namespace plcbinx
