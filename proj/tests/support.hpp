#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "plcbinx/arm_encoder.hpp"
#include "plcbinx/forge/corpus.hpp"
#include "plcbinx/funcrec.hpp"
#include "plcbinx/io.hpp"
#include "plcbinx/pipeline.hpp"
#include "plcbinx/learn/tensor.hpp"
#include "plcbinx/represent.hpp"

namespace plcbinx::testkit {

#ifndef PLCBINX_FIXTURE_DIR
#define PLCBINX_FIXTURE_DIR "tests/fixtures"
#endif

inline fs::path fixture_dir() { return fs::path(PLCBINX_FIXTURE_DIR); }

inline Bytes words_to_bytes(const std::vector<std::uint32_t>& words) {
  Bytes b;
  for (std::uint32_t w : words)
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(w >> (8 * k)));
  return b;
}

// Recovers a single function whose words start at `base`.
inline RecoveredFunction function_from_words(std::uint64_t base, const std::vector<std::uint32_t>& words,
                                             Category cat = Category::Unassigned) {
  const Bytes bytes = words_to_bytes(words);
  InstrIndex idx;
  idx.add_stream(linear_sweep(ByteView(bytes), base));
  auto fn = recover_function(base, {base}, idx);
  fn.category = cat;
  return fn;
}

// Fresh scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("plcbinx-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

inline std::vector<FunctionProgramRecord> analyze_corpus(const fs::path& dir, std::size_t jobs = 1) {
  const auto rows = read_index(dir / forge::kIndexFile);
  std::vector<FunctionProgramRecord> recs(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) { recs[i] = analyze_file(rows[i].path, labels_for(rows[i])); });
  return recs;
}

inline forge::Manifest read_manifest(const fs::path& dir, const std::string& binary_id) {
  return forge::manifest_from_json(nlohmann::ordered_json::parse(read_text(dir / forge::manifest_path(binary_id))));
}

// One build per label and platform, forged once per test process.
inline const fs::path& small_corpus() {
  static TempDir dir("corpus");
  static const bool ready = [] {
    forge::ForgeSpec spec;
    spec.programs_per_label = 1;
    forge::forge_corpus(spec, dir.path(), 1);
    return true;
  }();
  (void)ready;
  return dir.path();
}

inline const std::vector<FunctionProgramRecord>& small_records() {
  static const auto recs = analyze_corpus(small_corpus());
  return recs;
}

struct ReferenceRow {
  std::uint64_t address = 0;
  std::uint32_t word = 0;
  std::string capstone, forge;
};

inline std::vector<ReferenceRow> read_reference_fixture(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::vector<ReferenceRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.starts_with("address")) continue;
    const auto f = split_tabs(line);
    if (f.size() != 4) throw Error(ErrorKind::SchemaViolation, "fixture row: " + line);
    rows.push_back({std::stoull(f[0], nullptr, 16), static_cast<std::uint32_t>(std::stoul(f[1], nullptr, 16)), f[2], f[3]});
  }
  return rows;
}

// ---- gradient checks ----

struct GradStats {
  std::size_t tensors = 0, checked = 0;
  double worst = 0;
  std::string worst_name;
};

// Central differences on up to `per_tensor` entries of every parameter.
inline void grad_check(const learn::ParamList& ps, const std::function<double(bool)>& loss, GradStats& st, Rng& rng,
                std::size_t per_tensor = 6) {
  learn::zero_grads(ps);
  loss(true);
  const double h = 1e-5;
  for (auto* p : ps) {
    ++st.tensors;
    std::vector<std::size_t> idx;
    const std::size_t n = p->value.size();
    // the largest analytic entry plus random ones
    std::size_t big = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::fabs(p->grad.data[i]) > std::fabs(p->grad.data[big])) big = i;
    idx.push_back(big);
    for (std::size_t k = 1; k < std::min(per_tensor, n); ++k) idx.push_back(rng.below(n));
    for (std::size_t i : idx) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      const double lp = loss(false);
      p->value.data[i] = orig - h;
      const double lm = loss(false);
      p->value.data[i] = orig;
      const double num = (lp - lm) / (2 * h), ana = p->grad.data[i];
      const double denom = std::max({std::fabs(num), std::fabs(ana), 1e-6});
      const double err = std::fabs(num - ana) / denom;
      ++st.checked;
      if (err > st.worst) {
        st.worst = err;
        st.worst_name = p->name;
      }
    }
  }
}

// ---- golden fixtures ----

struct NormalizationCase {
  std::string source;  // assembly as written in the golden table
  std::uint32_t word;
  std::uint64_t address;
  std::optional<std::string> callee;
  std::vector<std::string> expected;
};

inline std::vector<NormalizationCase> normalization_cases() {
  using namespace arm;
  return {
      {"MOV R3, R0", mov_reg(kR3, kR0), 0x1000, {}, {"mov", "reg", "reg"}},
      {"CMP R3, #2", cmp_imm(kR3, 2), 0x1000, {}, {"cmp", "reg", "imm"}},
      {"LDR R0, [SP,#8]", ldst(true, false, kR0, kSp, 8), 0x1000, {}, {"ldr", "reg", "mem"}},
      {"BL _ARRAY_ABS", branch(0x401000, 0x4012A0, true), 0x401000, "_ARRAY_ABS", {"bl", "call_name:_ARRAY_ABS"}},
      {"BL 0x4012A0", branch(0x401000, 0x4012A0, true), 0x401000, {}, {"bl", "call_addr"}},
      {"MOV PC, R6", mov_pc(kR6), 0x1000, {}, {"mov", "call_indirect"}},
  };
}

inline std::vector<std::string> normalize_case(const NormalizationCase& c) {
  const auto in = decode(c.word, c.address);
  if (!in) throw Error(ErrorKind::InvariantViolation, "golden word does not decode: " + c.source);
  NameResolver resolve = [&](std::uint64_t at) -> std::optional<std::string> {
    if (at == c.address) return c.callee;
    return std::nullopt;
  };
  return normalize(*in, resolve);
}

// Core function whose second block has 12 instructions, one predecessor and
// two successors:
//   b0: push; cmp; bne ret
//   b1: 11 data ops; beq ret
//   b2: mov r0, #0
//   b3: pop {r4, pc}
inline RecoveredFunction acfg_fixture() {
  using namespace arm;
  constexpr std::uint64_t base = 0x8000;
  std::vector<std::uint32_t> w;
  w.push_back(push(regs({kR4, kLr})));
  w.push_back(cmp_imm(kR0, 1));
  const std::size_t b0_branch = w.size();
  w.push_back(0);
  for (unsigned i = 0; i < 11; ++i) w.push_back(i % 2 ? mov_reg(kR1 + i % 3, kR0) : dp_imm(DpOp::Add, kR0, kR0, i + 1));
  const std::size_t b1_branch = w.size();
  w.push_back(0);
  w.push_back(mov_imm(kR0, 0));
  const std::uint64_t ret = base + 4 * w.size();
  w.push_back(pop(regs({kR4, kPc})));
  w[b0_branch] = branch(base + 4 * b0_branch, ret, false, 0x1);  // ne
  w[b1_branch] = branch(base + 4 * b1_branch, ret, false, 0x0);  // eq
  return function_from_words(base, w, Category::Core);
}

// cmp; beq L; bx lr; L: mov r0, #1; bx lr. Exactly two edges, both from b0.
inline RecoveredFunction two_edge_fixture() {
  using namespace arm;
  constexpr std::uint64_t base = 0x9000;
  return function_from_words(base, {cmp_imm(kR0, 0), branch(base + 4, base + 12, false, 0x0), bx(kLr),
                                    mov_imm(kR0, 1), bx(kLr)});
}

}  // namespace plcbinx::testkit
