#pragma once

// Forge-side assembler: instruction words from the subset encoder paired with
// text rendered in Capstone's conventions. The text rules live here rather
// than in the decoder so the two can be checked against each other.

#include <bit>
#include <cstdint>
#include <string>

#include "plcbinx/arm_encoder.hpp"

namespace plcbinx::forge {

enum class Flow { None, Return, Indirect };

struct AsmInstr {
  std::uint32_t word = 0;
  std::string text;
  Flow flow = Flow::None;
  bool operator==(const AsmInstr&) const = default;
};

namespace as {

inline constexpr const char* kRegs[16] = {"r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7",
                                          "r8", "sb", "sl", "fp", "ip", "sp", "lr", "pc"};
inline constexpr const char* kConds[16] = {"eq", "ne", "hs", "lo", "mi", "pl", "vs", "vc",
                                           "hi", "ls", "ge", "lt", "gt", "le", "", "nv"};

inline constexpr std::uint32_t EQ = 0, NE = 1, HS = 2, LO = 3, MI = 4, PL = 5, HI = 8, LS = 9, GE = 10, LT = 11,
                               GT = 12, LE = 13, AL = 14;
inline constexpr unsigned FP = 11, IP = 12, SP = 13, LR = 14, PC = 15;

inline std::string reg(unsigned r) { return kRegs[r & 15]; }

inline std::string imm(std::int64_t v) {
  const std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-v) : static_cast<std::uint64_t>(v);
  const std::string sign = v < 0 ? "-" : "";
  if (mag < 10) return "#" + sign + std::to_string(mag);
  return "#" + sign + "0x" + hex_lower(mag);
}

inline const char* op_name(arm::DpOp op) {
  switch (op) {
    case arm::DpOp::And: return "and";
    case arm::DpOp::Eor: return "eor";
    case arm::DpOp::Sub: return "sub";
    case arm::DpOp::Add: return "add";
    case arm::DpOp::Cmp: return "cmp";
    case arm::DpOp::Orr: return "orr";
    case arm::DpOp::Mov: return "mov";
  }
  return "?";
}

inline std::string dp_mnemonic(arm::DpOp op, bool s, std::uint32_t cond) {
  return std::string(op_name(op)) + (s && op != arm::DpOp::Cmp ? "s" : "") + kConds[cond];
}

inline std::string dp_operands(arm::DpOp op, unsigned rd, unsigned rn, const std::string& op2) {
  if (op == arm::DpOp::Mov) return reg(rd) + ", " + op2;
  if (op == arm::DpOp::Cmp) return reg(rn) + ", " + op2;
  return reg(rd) + ", " + reg(rn) + ", " + op2;
}

inline AsmInstr dp_imm(arm::DpOp op, unsigned rd, unsigned rn, std::uint32_t v, bool s = false,
                       std::uint32_t cond = AL) {
  return {arm::dp_imm(op, rd, rn, v, s, cond), dp_mnemonic(op, s, cond) + " " + dp_operands(op, rd, rn, imm(v))};
}

inline AsmInstr dp_reg(arm::DpOp op, unsigned rd, unsigned rn, unsigned rm, bool s = false,
                       std::uint32_t cond = AL) {
  AsmInstr a{arm::dp_reg(op, rd, rn, rm, s, cond), dp_mnemonic(op, s, cond) + " " + dp_operands(op, rd, rn, reg(rm))};
  if (op == arm::DpOp::Mov && rd == PC) a.flow = rm == LR ? Flow::Return : Flow::Indirect;
  return a;
}

inline AsmInstr mov(unsigned rd, std::uint32_t v, std::uint32_t cond = AL) {
  return as::dp_imm(arm::DpOp::Mov, rd, 0, v, false, cond);
}
inline AsmInstr movr(unsigned rd, unsigned rm, std::uint32_t cond = AL) {
  return as::dp_reg(arm::DpOp::Mov, rd, 0, rm, false, cond);
}
inline AsmInstr cmp(unsigned rn, std::uint32_t v) { return as::dp_imm(arm::DpOp::Cmp, 0, rn, v); }
inline AsmInstr cmpr(unsigned rn, unsigned rm) { return as::dp_reg(arm::DpOp::Cmp, 0, rn, rm); }

inline AsmInstr mem(bool load, bool byte, unsigned rt, unsigned rn, std::int32_t off) {
  std::string t = std::string(load ? "ldr" : "str") + (byte ? "b" : "") + " " + reg(rt) + ", [" + reg(rn);
  t += off == 0 ? "]" : ", " + imm(off) + "]";
  return {arm::ldst(load, byte, rt, rn, off), t};
}
inline AsmInstr ldr(unsigned rt, unsigned rn, std::int32_t off) { return mem(true, false, rt, rn, off); }
inline AsmInstr str(unsigned rt, unsigned rn, std::int32_t off) { return mem(false, false, rt, rn, off); }
inline AsmInstr ldrb(unsigned rt, unsigned rn, std::int32_t off) { return mem(true, true, rt, rn, off); }
inline AsmInstr strb(unsigned rt, unsigned rn, std::int32_t off) { return mem(false, true, rt, rn, off); }

inline std::string reglist(std::uint16_t list) {
  std::string s = "{";
  for (unsigned r = 0; r < 16; ++r) {
    if (!(list & (1u << r))) continue;
    if (s.size() > 1) s += ", ";
    s += reg(r);
  }
  return s + "}";
}

inline AsmInstr push(std::uint16_t list) {
  return {arm::push(list), (std::popcount(list) >= 2 ? "push " : "stmdb sp!, ") + reglist(list)};
}

inline AsmInstr pop(std::uint16_t list) {
  AsmInstr a{arm::pop(list), (std::popcount(list) >= 2 ? "pop " : "ldm sp!, ") + reglist(list)};
  if (list & (1u << PC)) a.flow = Flow::Return;
  return a;
}

inline AsmInstr bx(unsigned rm) {
  return {arm::bx(rm), "bx " + reg(rm), rm == LR ? Flow::Return : Flow::Indirect};
}

inline AsmInstr branch(std::uint64_t from, std::uint64_t to, bool link, std::uint32_t cond = AL) {
  return {arm::branch(from, to, link, cond),
          std::string(link ? "bl" : "b") + kConds[cond] + " " + imm(static_cast<std::int64_t>(to))};
}

}  // namespace as
}  // namespace plcbinx::forge
