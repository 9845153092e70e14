#pragma once

// Abstract PLC programs (a call DAG of core routines built from control-flow
// motifs), per-platform code styles, runtime name pools, and lowering of both
// into label-level function bodies.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "plcbinx/common.hpp"
#include "plcbinx/forge/asm.hpp"
#include "plcbinx/funcrec.hpp"
#include "plcbinx/labels.hpp"

namespace plcbinx::forge {

// ---------------------------------------------------------------- bodies

struct Item {
  enum class Kind { Instr, Label, Branch, Call, Tail };
  Kind kind = Kind::Instr;
  AsmInstr instr;
  int label = -1;
  std::uint32_t cond = as::AL;
  std::string callee;
};

struct FunctionBody {
  std::vector<Item> items;
  int labels = 0;
  std::size_t instruction_count() const {
    return static_cast<std::size_t>(
        std::count_if(items.begin(), items.end(), [](const Item& i) { return i.kind != Item::Kind::Label; }));
  }
};

class BodyBuilder {
 public:
  int label() { return body_.labels++; }
  void place(int l) { body_.items.push_back({Item::Kind::Label, {}, l, as::AL, {}}); }
  void emit(AsmInstr in) { body_.items.push_back({Item::Kind::Instr, std::move(in), -1, as::AL, {}}); }
  void branch(int l, std::uint32_t cond = as::AL) { body_.items.push_back({Item::Kind::Branch, {}, l, cond, {}}); }
  void call(std::string callee) { body_.items.push_back({Item::Kind::Call, {}, -1, as::AL, std::move(callee)}); }
  void tail(std::string callee) { body_.items.push_back({Item::Kind::Tail, {}, -1, as::AL, std::move(callee)}); }
  FunctionBody take() { return std::move(body_); }

 private:
  FunctionBody body_;
};

// A function ready for layout. `name` is the symbol or record name; unnamed
// runtime functions in record-only containers keep their pool name here.
struct ForgeFunction {
  std::string name;
  Category category = Category::Runtime;
  FunctionBody body;
  std::map<std::string, int> motifs;
};

// ---------------------------------------------------------------- motifs

enum class Motif { ArrayLoop, ByteLoop, Diamond, SwitchChain, MathBlock, BitOps, CallChain, Counter, Clamp };
inline constexpr std::size_t kMotifCount = 9;
inline constexpr Motif kAllMotifs[kMotifCount] = {Motif::ArrayLoop, Motif::ByteLoop,  Motif::Diamond,
                                                  Motif::SwitchChain, Motif::MathBlock, Motif::BitOps,
                                                  Motif::CallChain, Motif::Counter,   Motif::Clamp};

inline const char* to_string(Motif m) {
  switch (m) {
    case Motif::ArrayLoop: return "array_loop";
    case Motif::ByteLoop: return "byte_loop";
    case Motif::Diamond: return "diamond";
    case Motif::SwitchChain: return "switch_chain";
    case Motif::MathBlock: return "math_block";
    case Motif::BitOps: return "bit_ops";
    case Motif::CallChain: return "call_chain";
    case Motif::Counter: return "counter";
    case Motif::Clamp: return "clamp";
  }
  return "?";
}

// Motif with its drawn parameters; lowering is a pure function of these and
// the platform style.
struct MotifInst {
  Motif kind = Motif::MathBlock;
  std::uint32_t cond = as::AL;
  std::array<std::uint32_t, 6> p{};
  bool operator==(const MotifInst&) const = default;
};

struct LabelProfile {
  std::string_view label;
  std::array<int, kMotifCount> weights;  // in kAllMotifs order
  std::array<std::uint32_t, 2> conds;
  std::array<std::string_view, 4> names;
};

// clang-format off
inline constexpr LabelProfile kProfiles[] = {
  {"Actuators_HVAC",            {0, 0, 2, 1, 1, 0, 1, 1, 3}, {as::GT, as::LE}, {"VALVE_CTRL", "DAMPER_POS", "FAN_SPEED", "HEAT_STAGE"}},
  {"Arithmetic_Func",           {0, 0, 0, 0, 4, 1, 0, 0, 1}, {as::GE, as::LT}, {"ADD_SAT", "MUL_DIV", "INC_DEC", "ABS_DIFF"}},
  {"Array_Buffer_Mem_List",     {4, 0, 0, 0, 0, 0, 2, 0, 0}, {as::LT, as::NE}, {"_ARRAY_ABS", "ARRAY_COPY", "FIFO_PUSH", "LIST_FIND"}},
  {"Basic_Dev_Drivers",         {0, 0, 1, 1, 0, 2, 3, 0, 0}, {as::EQ, as::NE}, {"DRV_INIT", "DRV_READ", "DRV_WRITE", "PORT_CFG"}},
  {"Basic_Other_Func",          {1, 1, 1, 1, 1, 1, 1, 1, 1}, {as::EQ, as::GT}, {"MISC_UTIL", "SEL_MUX", "MOVE_VAL", "NOP_FB"}},
  {"Building_Other_Func",       {0, 0, 2, 0, 0, 0, 1, 2, 1}, {as::NE, as::HI}, {"LIGHT_CTRL", "BLIND_CTRL", "OCCUPANCY", "SCHEDULE"}},
  {"Calculations",              {1, 0, 0, 0, 3, 0, 0, 0, 1}, {as::LO, as::HS}, {"AVERAGE", "TOTALIZE", "RATIO", "PERCENT"}},
  {"Complex_Math",              {1, 0, 1, 0, 3, 0, 1, 0, 0}, {as::MI, as::PL}, {"SQRT_APPROX", "POLY_EVAL", "EXP_SERIES", "ATAN_APPROX"}},
  {"Ctrl_Mods",                 {0, 0, 1, 0, 2, 0, 0, 1, 3}, {as::GT, as::LT}, {"PID_CTRL", "RAMP_LIMIT", "DEADBAND", "FEEDFWD"}},
  {"Latches_FlipFlop_ShiftReg", {0, 0, 1, 0, 0, 4, 0, 0, 0}, {as::NE, as::EQ}, {"SR_LATCH", "RS_LATCH", "SHIFT_REG", "TOGGLE_FF"}},
  {"Logic_Mods",                {0, 0, 4, 1, 0, 2, 0, 0, 0}, {as::EQ, as::NE}, {"AND_GATE", "OR_GATE", "XOR_LOGIC", "MAJORITY"}},
  {"Mathematics",               {0, 0, 0, 0, 4, 0, 0, 0, 2}, {as::GE, as::LE}, {"SCALE_LIN", "MIN_MAX", "LIMIT_VAL", "ROUND_INT"}},
  {"Measure_Mods",              {1, 0, 0, 0, 1, 0, 0, 2, 2}, {as::HI, as::LS}, {"FLOW_MEAS", "LEVEL_MEAS", "FILTER_AVG", "PEAK_HOLD"}},
  {"Network_1",                 {0, 1, 0, 1, 0, 0, 4, 0, 0}, {as::NE, as::EQ}, {"NET_SEND", "NET_RECV", "PKT_BUILD", "CRC_CALC"}},
  {"Network_2",                 {1, 0, 0, 2, 0, 1, 3, 0, 0}, {as::EQ, as::HS}, {"FRAME_PARSE", "ROUTE_MSG", "PORT_POLL", "ACK_WAIT"}},
  {"Pulse_Gen",                 {0, 0, 0, 0, 0, 1, 0, 4, 0}, {as::GE, as::LT}, {"PULSE_TRAIN", "BLINK", "PWM_GEN", "ONE_SHOT"}},
  {"Sensors",                   {0, 0, 1, 0, 1, 0, 0, 1, 3}, {as::LT, as::GT}, {"TEMP_SCALE", "PRESS_CONV", "SENSOR_CHK", "ANALOG_FILT"}},
  {"Signal_Gen",                {1, 0, 0, 0, 2, 0, 0, 3, 0}, {as::LO, as::GE}, {"RAMP_GEN", "SAW_GEN", "SQUARE_GEN", "SINE_TABLE"}},
  {"Signal_Proc",               {2, 0, 0, 0, 2, 0, 0, 1, 1}, {as::LT, as::MI}, {"LOWPASS", "MOVING_AVG", "DERIVATIVE", "INTEGRATOR"}},
  {"Str_Func",                  {0, 4, 1, 0, 0, 0, 1, 0, 0}, {as::NE, as::EQ}, {"CONCAT_STR", "FIND_CHAR", "LEFT_STR", "MID_STR"}},
  {"Time_and_Date",             {0, 0, 1, 2, 1, 0, 0, 2, 0}, {as::HS, as::LO}, {"RTC_READ", "DATE_ADD", "TIME_DIFF", "DAY_OF_WEEK"}},
  {"Vector_Math",               {3, 0, 0, 0, 2, 0, 0, 0, 0}, {as::LT, as::LE}, {"VEC_ADD", "VEC_DOT", "VEC_SCALE", "VEC_NORM"}},
};
// clang-format on

inline constexpr std::string_view kGenericNames[] = {"HELPER", "UTIL_FN", "CALC_STEP", "UPDATE",
                                                     "PROCESS", "CHECK",  "INIT_VARS", "EVAL"};

inline const LabelProfile& profile_for(std::string_view label) {
  for (const auto& p : kProfiles)
    if (p.label == label) return p;
  throw Error(ErrorKind::Usage, "unknown functionality label '" + std::string(label) + "'");
}

inline Motif weighted_motif(const std::array<int, kMotifCount>& w, Rng& rng) {
  int total = 0;
  for (int x : w) total += x;
  int r = static_cast<int>(rng.below(static_cast<std::size_t>(total)));
  for (std::size_t i = 0; i < kMotifCount; ++i) {
    if (r < w[i]) return kAllMotifs[i];
    r -= w[i];
  }
  return kAllMotifs[kMotifCount - 1];
}

inline constexpr std::uint32_t kAnyConds[] = {as::EQ, as::NE, as::LT, as::GE, as::GT, as::LE, as::HI, as::LO};

inline MotifInst draw_motif(Motif kind, std::uint32_t cond, Rng& rng) {
  MotifInst m;
  m.kind = kind;
  m.cond = cond;
  for (auto& x : m.p) x = static_cast<std::uint32_t>(rng.next() & 0xFFFF);
  return m;
}

// ---------------------------------------------------------------- programs

struct CoreRoutine {
  std::string stem;  // platform-neutral name; empty for the main program
  bool block = false;  // function block rather than function
  std::vector<MotifInst> motifs;
  std::vector<std::size_t> callees;  // indices of routines called, all greater than the caller's
  std::vector<std::size_t> call_slots;  // motif index before which each callee is called
  bool operator==(const CoreRoutine&) const = default;
};

struct Program {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<CoreRoutine> routines;  // [0] is the main program

  std::array<int, kMotifCount> motif_counts() const {
    std::array<int, kMotifCount> c{};
    for (const auto& r : routines)
      for (const auto& m : r.motifs) ++c[static_cast<std::size_t>(m.kind)];
    return c;
  }
  bool operator==(const Program&) const = default;
};

// Draws a program: 2-4 core routines, each built from motifs whose mix follows
// the label profile (70%) or a uniform draw (30%).
inline Program forge_program(std::string_view label, std::uint64_t program_seed) {
  const LabelProfile& prof = profile_for(label);
  Rng rng(program_seed ^ fnv1a64(label));
  Program prog;
  prog.label = std::string(label);
  prog.seed = program_seed;
  const std::size_t n = 2 + rng.below(3);

  std::set<std::string> used;
  for (std::size_t i = 0; i < n; ++i) {
    CoreRoutine r;
    if (i > 0) {
      do {
        r.stem = rng.chance(0.6) ? std::string(prof.names[rng.below(4)])
                                 : std::string(kGenericNames[rng.below(std::size(kGenericNames))]);
        if (used.contains(r.stem)) r.stem += "_" + std::to_string(rng.between(1, 9));
      } while (used.contains(r.stem));
      used.insert(r.stem);
      r.block = rng.chance(0.5);
    }
    const std::size_t motifs = i == 0 ? 1 + rng.below(3) : 1 + rng.below(4);
    for (std::size_t k = 0; k < motifs; ++k) {
      const Motif kind = rng.chance(0.7) ? weighted_motif(prof.weights, rng) : kAllMotifs[rng.below(kMotifCount)];
      const std::uint32_t cond = rng.chance(0.7) ? prof.conds[rng.below(2)] : kAnyConds[rng.below(8)];
      r.motifs.push_back(draw_motif(kind, cond, rng));
    }
    prog.routines.push_back(std::move(r));
  }
  // Call DAG rooted at main: every helper has a caller with a smaller index.
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t caller = rng.chance(0.6) ? 0 : rng.below(i);
    prog.routines[caller].callees.push_back(i);
  }
  for (std::size_t i = 0; i + 2 < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j)
      if (rng.chance(0.2) && std::find(prog.routines[i].callees.begin(), prog.routines[i].callees.end(), j) ==
                                 prog.routines[i].callees.end())
        prog.routines[i].callees.push_back(j);
  for (auto& r : prog.routines) {
    std::sort(r.callees.begin(), r.callees.end());
    for (std::size_t k = 0; k < r.callees.size(); ++k) r.call_slots.push_back(rng.below(r.motifs.size() + 1));
  }
  return prog;
}

// ---------------------------------------------------------------- styles

struct Style {
  std::uint16_t saved = 0;  // prologue register list, including lr
  unsigned base = 4;        // register holding the instance/frame pointer
  int off_sign = 1;
  int off0 = 8;
  bool frame = false;
  bool mov_pc_return = false;  // leaf returns with `mov pc, lr` instead of `bx lr`

  std::int32_t slot(std::uint32_t k) const { return off_sign * (off0 + 4 * static_cast<int>(k % 24)); }
};

inline Style style_for(Platform p) {
  using arm::regs;
  switch (p) {
    case Platform::CODESYSv3: return {regs({4, 5, 6, as::LR}), 4, 1, 8, false, false};
    case Platform::GEB: return {regs({4, 5, as::LR}), 5, 1, 4, false, true};
    case Platform::OpenPLCv2:
    case Platform::OpenPLCv3: return {regs({as::FP, as::LR}), as::FP, -1, 8, true, false};
  }
  return {};
}

inline void emit_prologue(BodyBuilder& b, const Style& s, std::uint32_t frame_words) {
  b.emit(as::push(s.saved));
  if (s.frame) {
    b.emit(as::dp_imm(arm::DpOp::Add, as::FP, as::SP, 4));
    b.emit(as::dp_imm(arm::DpOp::Sub, as::SP, as::SP, 8 + 8 * (frame_words % 4)));
  } else {
    b.emit(as::movr(s.base, 0));
  }
}

// Restores registers; with `ret` the saved lr is popped into pc.
inline void emit_epilogue(BodyBuilder& b, const Style& s, bool ret = true) {
  if (s.frame) b.emit(as::dp_imm(arm::DpOp::Sub, as::SP, as::FP, 4));
  std::uint16_t list = s.saved;
  if (ret) list = static_cast<std::uint16_t>((list & ~(1u << as::LR)) | (1u << as::PC));
  b.emit(as::pop(list));
}

inline void emit_leaf_return(BodyBuilder& b, const Style& s) {
  b.emit(s.mov_pc_return ? as::movr(as::PC, as::LR) : as::bx(as::LR));
}

// ---------------------------------------------------------------- lowering

inline constexpr arm::DpOp kAluOps[] = {arm::DpOp::Add, arm::DpOp::Sub, arm::DpOp::Eor, arm::DpOp::Orr,
                                        arm::DpOp::And};

// `callee_for(role)` names the library routine a call-chain motif invokes.
template <class CalleeFor>
void lower_motif(BodyBuilder& b, const MotifInst& m, const Style& s, unsigned base, CalleeFor&& callee_for) {
  using arm::DpOp;
  const auto& p = m.p;
  auto slot = [&](std::uint32_t k) { return base == s.base ? s.slot(k) : 4 * static_cast<std::int32_t>(k % 16); };
  const std::uint32_t c = m.cond == as::AL ? as::NE : m.cond;
  switch (m.kind) {
    case Motif::ArrayLoop: {
      const int loop = b.label();
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::mov(1, 0));
      b.emit(as::mov(2, 4 + p[1] % 60));
      b.place(loop);
      b.emit(as::ldr(3, 0, 0));
      b.emit(as::dp_imm(kAluOps[p[2] % 5], 3, 3, p[3] % 200));
      b.emit(as::str(3, 0, 0));
      b.emit(as::dp_imm(DpOp::Add, 0, 0, 4));
      b.emit(as::dp_imm(DpOp::Add, 1, 1, 1));
      b.emit(as::cmpr(1, 2));
      b.branch(loop, c == as::NE || c == as::LT ? c : as::LT);
      break;
    }
    case Motif::ByteLoop: {
      const int loop = b.label();
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::mov(1, 0));
      b.place(loop);
      b.emit(as::ldrb(2, 0, 0));
      b.emit(as::dp_imm(DpOp::Add, 0, 0, 1));
      b.emit(as::dp_imm(DpOp::Add, 1, 1, 1));
      b.emit(as::cmp(2, p[1] % 2 ? 0 : 0x20));
      b.branch(loop, as::NE);
      b.emit(as::str(1, base, slot(p[2])));
      break;
    }
    case Motif::Diamond: {
      const int other = b.label(), join = b.label();
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::cmp(0, p[1] % 100));
      b.branch(other, c);
      for (std::uint32_t k = 0; k <= p[2] % 3; ++k) b.emit(as::dp_imm(kAluOps[(p[3] + k) % 5], 1, 0, 1u << (k + 1)));
      b.branch(join);
      b.place(other);
      for (std::uint32_t k = 0; k <= p[4] % 3; ++k) b.emit(as::mov(1, (p[5] + k) % 16));
      b.place(join);
      b.emit(as::str(1, base, slot(p[0] + 1)));
      break;
    }
    case Motif::SwitchChain: {
      const std::uint32_t cases = 2 + p[1] % 4;
      const int end = b.label();
      std::vector<int> arms;
      b.emit(as::ldr(0, base, slot(p[0])));
      for (std::uint32_t k = 0; k < cases; ++k) {
        arms.push_back(b.label());
        b.emit(as::cmp(0, k));
        b.branch(arms.back(), as::EQ);
      }
      b.emit(as::mov(1, p[2] % 200));
      b.branch(end);
      for (std::uint32_t k = 0; k < cases; ++k) {
        b.place(arms[k]);
        b.emit(as::mov(1, (p[3] + 7 * k) % 200));
        if (k + 1 < cases) b.branch(end);
      }
      b.place(end);
      b.emit(as::str(1, base, slot(p[0] + 2)));
      break;
    }
    case Motif::MathBlock: {
      const std::uint32_t n = 4 + p[1] % 9;
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::ldr(1, base, slot(p[0] + 1)));
      for (std::uint32_t k = 0; k < n; ++k) {
        const auto op = kAluOps[(p[2] + k) % 5];
        const unsigned rd = 2 + (k % 2);
        if ((p[3] >> k) & 1) b.emit(as::dp_reg(op, rd, k % 2, (k + 1) % 4));
        else b.emit(as::dp_imm(op, rd, rd, (p[4] + 13 * k) % 250));
      }
      b.emit(as::str(2, base, slot(p[0] + 2)));
      break;
    }
    case Motif::BitOps: {
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::dp_imm(DpOp::And, 1, 0, 1u << (p[1] % 8), true));
      b.emit(as::mov(2, 1, as::NE));
      b.emit(as::mov(2, 0, as::EQ));
      b.emit(as::dp_imm(DpOp::Eor, 3, 2, 1));
      if (p[2] % 2) b.emit(as::dp_reg(DpOp::Orr, 3, 3, 0));
      b.emit(as::strb(2, base, slot(p[0] + 1)));
      b.emit(as::strb(3, base, slot(p[0] + 2)));
      break;
    }
    case Motif::CallChain: {
      const std::uint32_t calls = 1 + p[1] % 2;
      for (std::uint32_t k = 0; k < calls; ++k) {
        b.emit(as::ldr(0, base, slot(p[0] + k)));
        b.emit(as::mov(1, 4 * (1 + (p[2] + k) % 16)));
        b.call(callee_for((p[3] + k) % 3));
      }
      b.emit(as::str(0, base, slot(p[0] + 3)));
      break;
    }
    case Motif::Counter: {
      const std::uint32_t limit = 10 + p[1] % 200;
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::dp_imm(DpOp::Add, 0, 0, 1));
      b.emit(as::cmp(0, limit));
      b.emit(as::mov(0, 0, as::GE));
      b.emit(as::str(0, base, slot(p[0])));
      b.emit(as::cmp(0, limit / 2));
      b.emit(as::mov(1, 1, c));
      b.emit(as::mov(1, 0, c ^ 1u));
      b.emit(as::strb(1, base, slot(p[0] + 1)));
      break;
    }
    case Motif::Clamp: {
      const std::uint32_t hi = 100 + p[1] % 150, lo = p[2] % 50;
      const int a = b.label(), d = b.label();
      b.emit(as::ldr(0, base, slot(p[0])));
      b.emit(as::cmp(0, hi));
      b.branch(a, as::LE);
      b.emit(as::mov(0, hi));
      b.place(a);
      b.emit(as::cmp(0, lo));
      b.branch(d, as::GE);
      b.emit(as::mov(0, lo));
      b.place(d);
      b.emit(as::str(0, base, slot(p[0] + 1)));
      break;
    }
  }
}

// ---------------------------------------------------------------- naming

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string routine_name(const CoreRoutine& r, Platform p) {
  const bool main = r.stem.empty();
  switch (p) {
    case Platform::CODESYSv3: return main ? "PLC_PRG" : r.stem;
    case Platform::GEB:
      if (main) return "dt_PR_program0_exec";
      return std::string(r.block ? "dt_FB_" : "dt_FN_") + lower(r.stem[0] == '_' ? r.stem.substr(1) : r.stem);
    case Platform::OpenPLCv2:
    case Platform::OpenPLCv3:
      if (main) return "PROGRAM0_body__";
      return r.block ? r.stem + "_body__" : r.stem;
  }
  return r.stem;
}

// ---------------------------------------------------------------- runtime pools

// Library routines core code may call, by role (copy, fill, divide).
inline std::array<std::string, 3> library_roles(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return {"SysMemCpy", "SysMemSet", "IecDivInt"};
    case Platform::GEB: return {"memcpy", "memset", "__divsi3"};
    case Platform::OpenPLCv2: return {"__aeabi_memcpy", "__aeabi_memset", "__aeabi_idiv"};
    case Platform::OpenPLCv3: return {"__aeabi_memcpy4", "__aeabi_memset4", "__aeabi_idivmod"};
  }
  return {};
}

// Cyclic scheduler entry that calls the main program.
inline std::string scheduler_name(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return "IecTaskCycle";
    case Platform::GEB: return "geb_task_cycle";
    case Platform::OpenPLCv2: return "config_run__";
    case Platform::OpenPLCv3: return "config_cycle__";
  }
  return {};
}

// Toolchain startup code placed first in every binary; shared by the two
// OpenPLC versions.
inline std::string startup_name(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return "AppStartup";
    case Platform::GEB: return "_start";
    case Platform::OpenPLCv2:
    case Platform::OpenPLCv3: return "mainCRTStartup";
  }
  return {};
}

inline std::vector<std::string> cross(std::initializer_list<std::string_view> pre,
                                      std::initializer_list<std::string_view> suf) {
  std::vector<std::string> out;
  for (auto a : pre)
    for (auto b : suf) out.push_back(std::string(a) + std::string(b));
  return out;
}

inline std::vector<std::string> build_pool(Platform p) {
  std::vector<std::string> v;
  switch (p) {
    case Platform::CODESYSv3:
      v = cross({"Sys", "Cmp", "IoDrv", "Iec", "Rts", "Bl", "Srv"},
                {"MemMove", "Init", "Exit", "Read", "Write", "GetTime", "Lock", "Unlock", "Alloc", "Free", "Open",
                 "Close", "Log", "Check", "Event", "Task", "Sem", "Timer", "Hook", "Reset"});
      break;
    case Platform::GEB:
      v = {"memmove", "memcmp",  "strlen", "strcpy", "strncpy", "strcmp", "strncmp", "strcat",   "abs",
           "labs",    "div",     "ldiv",   "atoi",   "itoa",    "sqrtf",  "floorf",  "ceilf",    "fabsf",
           "__udivsi3", "__modsi3", "__umodsi3", "__muldi3", "_init", "_fini", "malloc", "free",
           "calloc",  "realloc", "puts",   "printf", "sprintf", "snprintf", "qsort"};
      for (auto& s : cross({"geb_", "rt_", "os_", "hal_"},
                           {"init", "read", "write", "poll", "lock", "unlock", "alloc", "release", "open", "close",
                            "log", "tick", "event", "timer", "sync", "flush"}))
        v.push_back(s);
      break;
    case Platform::OpenPLCv2:
      v = cross({"wiringPi", "digital", "analog", "pwm", "softPwm", "serial", "i2c", "spi"},
                {"Setup", "Read", "Write", "Mode", "Init", "Close", "Open", "Flush", "Get", "Set", "Reset", "Clock"});
      for (const char* s : {"pinMode", "pullUpDnControl", "delayMicroseconds", "initializeHardware",
                            "finalizeHardware", "updateBuffersIn", "updateBuffersOut"})
        v.push_back(s);
      break;
    case Platform::OpenPLCv3:
      v = cross({"enip_", "pccc_", "dnp3_", "cip_", "mb_"},
                {"init", "handle_request", "parse_header", "send_reply", "open_session", "close_session", "read_tag",
                 "write_tag", "poll", "encode", "decode", "checksum", "register", "dispatch", "timeout", "reset"});
      for (const char* s : {"processModbusMessage", "readModbusCoils", "writeModbusRegisters", "glueVars",
                            "updateTime", "setupCycleDelay", "handleConnections", "startServer", "processMessage"})
        v.push_back(s);
      break;
  }
  for (const auto& r : library_roles(p)) v.push_back(r);
  v.push_back(scheduler_name(p));
  v.push_back(startup_name(p));
  return v;
}

enum class RuntimeShape { Leaf, Simple, Caller, Scheduler, Startup };

struct RuntimeSpec {
  std::string name;
  RuntimeShape shape = RuntimeShape::Simple;
  std::vector<std::string> callees;
  std::string tail;  // tail-call target, if any
  bool indirect_exit = false;
};

struct RuntimePool {
  Platform platform;
  std::vector<RuntimeSpec> specs;
  std::map<std::string, std::size_t> index;

  const RuntimeSpec& at(const std::string& name) const { return specs.at(index.at(name)); }
  // Function plus the runtime functions it calls or branches to.
  std::vector<std::string> closure(const std::string& name) const {
    std::vector<std::string> out{name};
    const auto& s = at(name);
    for (const auto& c : s.callees) out.push_back(c);
    if (!s.tail.empty()) out.push_back(s.tail);
    return out;
  }
};

inline RuntimePool make_pool(Platform p) {
  RuntimePool pool{p, {}, {}};
  const auto names = build_pool(p);
  const auto roles = library_roles(p);
  for (const auto& n : names) {
    RuntimeSpec s;
    s.name = n;
    const std::uint64_t h = fnv1a64(std::string(to_string(p)) + ":" + n);
    if (n == scheduler_name(p)) s.shape = RuntimeShape::Scheduler;
    else if (n == startup_name(p)) s.shape = RuntimeShape::Startup;
    else if (std::find(roles.begin(), roles.end(), n) != roles.end()) s.shape = RuntimeShape::Leaf;
    else s.shape = h % 20 < 5 ? RuntimeShape::Leaf : h % 20 < 12 ? RuntimeShape::Simple : RuntimeShape::Caller;
    pool.index.emplace(n, pool.specs.size());
    pool.specs.push_back(std::move(s));
  }
  std::vector<std::string> leaves, simples;
  for (const auto& s : pool.specs) {
    if (s.shape == RuntimeShape::Leaf) leaves.push_back(s.name);
    if (s.shape == RuntimeShape::Simple) simples.push_back(s.name);
  }
  for (auto& s : pool.specs) {
    if (s.shape != RuntimeShape::Caller) continue;
    Rng rng(fnv1a64(std::string(to_string(p)) + ":callees:" + s.name));
    const std::size_t n = 1 + rng.below(2);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& src = rng.chance(0.5) ? leaves : simples;
      const std::string& c = src[rng.below(src.size())];
      if (std::find(s.callees.begin(), s.callees.end(), c) == s.callees.end()) s.callees.push_back(c);
    }
    const double r = rng.uniform();
    if (r < 0.2) s.tail = simples[rng.below(simples.size())];
    else if (r < 0.3) s.indirect_exit = true;
  }
  return pool;
}

inline const RuntimePool& runtime_pool(Platform p) {
  static const std::array<RuntimePool, 4> pools = {make_pool(Platform::CODESYSv3), make_pool(Platform::GEB),
                                                   make_pool(Platform::OpenPLCv2), make_pool(Platform::OpenPLCv3)};
  return pools[static_cast<std::size_t>(p)];
}

// Motif count range of runtime bodies per platform style.
inline std::pair<std::uint32_t, std::uint32_t> runtime_motif_range(Platform p) {
  switch (p) {
    case Platform::CODESYSv3: return {2, 5};
    case Platform::GEB: return {1, 4};
    case Platform::OpenPLCv2: return {1, 3};
    case Platform::OpenPLCv3: return {2, 4};
  }
  return {1, 3};
}

inline constexpr Motif kRuntimeMotifs[] = {Motif::ArrayLoop, Motif::ByteLoop, Motif::Diamond, Motif::SwitchChain,
                                           Motif::MathBlock, Motif::BitOps,   Motif::Counter, Motif::Clamp};

// Runtime bodies depend only on (platform, name), like library code linked
// unchanged into every binary of one toolchain.
inline ForgeFunction lower_startup(Platform p) {
  const Style style = style_for(p);
  Rng rng(fnv1a64(std::string(to_string(family_of(p))) + ":startup"));
  BodyBuilder b;
  auto no_calls = [](std::uint32_t) -> std::string {
    throw Error(ErrorKind::InvariantViolation, "startup motif with a call");
  };
  emit_prologue(b, style, 4);
  for (int k = 0; k < 2; ++k) {
    const Motif m = kRuntimeMotifs[rng.below(std::size(kRuntimeMotifs))];
    lower_motif(b, draw_motif(m, kAnyConds[rng.below(8)], rng), style, style.base, no_calls);
  }
  b.emit(as::ldr(0, style.base, style.slot(2)));
  b.call(scheduler_name(p));
  emit_epilogue(b, style);
  return {startup_name(p), Category::Runtime, b.take(), {}};
}

inline ForgeFunction lower_runtime(Platform p, const std::string& name, const std::string& main_name) {
  const RuntimeSpec& spec = runtime_pool(p).at(name);
  if (spec.shape == RuntimeShape::Startup) return lower_startup(p);
  const Style style = style_for(p);
  Rng rng(fnv1a64(std::string(to_string(p)) + ":body:" + name));
  BodyBuilder b;
  auto no_calls = [](std::uint32_t) -> std::string {
    throw Error(ErrorKind::InvariantViolation, "runtime motif with a call");
  };
  const auto [lo, hi] = runtime_motif_range(p);
  std::uint32_t motifs = rng.between(lo, hi);
  const bool leaf = spec.shape == RuntimeShape::Leaf;
  if (leaf) motifs = std::min<std::uint32_t>(motifs, 2);
  const unsigned base = leaf ? as::IP : style.base;
  if (leaf) b.emit(as::movr(as::IP, 0));
  else emit_prologue(b, style, rng.between(0, 3));
  std::size_t next_call = 0;
  for (std::uint32_t k = 0; k < motifs; ++k) {
    const Motif m = kRuntimeMotifs[rng.below(std::size(kRuntimeMotifs))];
    lower_motif(b, draw_motif(m, kAnyConds[rng.below(8)], rng), style, base, no_calls);
    if (next_call < spec.callees.size() && rng.chance(0.6)) {
      b.emit(as::mov(0, rng.between(0, 8)));
      b.call(spec.callees[next_call++]);
    }
  }
  for (; next_call < spec.callees.size(); ++next_call) b.call(spec.callees[next_call]);
  if (spec.shape == RuntimeShape::Scheduler) {
    b.emit(as::ldr(0, base, style.slot(1)));
    b.call(main_name);
  }
  if (leaf) {
    emit_leaf_return(b, style);
  } else if (!spec.tail.empty()) {
    emit_epilogue(b, style, false);
    b.tail(spec.tail);
  } else if (spec.indirect_exit) {
    b.emit(as::ldr(3, 0, 4 * static_cast<std::int32_t>(rng.between(1, 6))));
    emit_epilogue(b, style, false);
    b.emit(rng.chance(0.5) ? as::bx(3) : as::movr(as::PC, 3));
  } else {
    emit_epilogue(b, style);
  }
  return {name, Category::Runtime, b.take(), {}};
}

// Lowers the core routines of `prog` for one platform style.
inline std::vector<ForgeFunction> lower_program(const Program& prog, Platform p) {
  const Style style = style_for(p);
  const auto roles = library_roles(p);
  std::vector<ForgeFunction> out;
  for (const auto& r : prog.routines) {
    BodyBuilder b;
    emit_prologue(b, style, static_cast<std::uint32_t>(r.motifs.size()));
    std::map<std::string, int> counts;
    for (std::size_t k = 0; k <= r.motifs.size(); ++k) {
      for (std::size_t c = 0; c < r.callees.size(); ++c) {
        if (r.call_slots[c] != k) continue;
        b.emit(as::ldr(0, style.base, style.slot(static_cast<std::uint32_t>(3 * c + 1))));
        b.call(routine_name(prog.routines[r.callees[c]], p));
      }
      if (k == r.motifs.size()) break;
      lower_motif(b, r.motifs[k], style, style.base, [&](std::uint32_t role) { return roles[role % 3]; });
      ++counts[to_string(r.motifs[k].kind)];
    }
    emit_epilogue(b, style);
    out.push_back({routine_name(r, p), Category::Core, b.take(), std::move(counts)});
  }
  return out;
}

}  // namespace plcbinx::forge
