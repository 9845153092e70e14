#pragma once

// ARM32 (ARM state, little-endian) decoder for the instruction subset the
// recovery pipeline needs. Text rendering follows Capstone's conventions so
// decoded output can be compared with a reference disassembler directly.

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plcbinx/common.hpp"

namespace plcbinx {

enum class InstrKind { DataProc, LoadStore, Branch, BranchLink, IndirectTransfer, Return, PushPop, Other };
enum class OperandClass { Reg, Imm, Mem, Label };

inline const char* to_string(InstrKind k) {
  switch (k) {
    case InstrKind::DataProc: return "DataProc";
    case InstrKind::LoadStore: return "LoadStore";
    case InstrKind::Branch: return "Branch";
    case InstrKind::BranchLink: return "BranchLink";
    case InstrKind::IndirectTransfer: return "IndirectTransfer";
    case InstrKind::Return: return "Return";
    case InstrKind::PushPop: return "PushPop";
    case InstrKind::Other: return "Other";
  }
  return "?";
}

struct Operand {
  OperandClass cls;
  std::string text;
  bool operator==(const Operand&) const = default;
};

namespace arm {
inline constexpr std::uint32_t kCondAl = 0xE;
inline constexpr unsigned kSp = 13, kLr = 14, kPc = 15;

inline constexpr std::string_view kCondSuffix[16] = {"eq", "ne", "hs", "lo", "mi", "pl", "vs", "vc",
                                                     "hi", "ls", "ge", "lt", "gt", "le", "",   "nv"};

inline std::string reg_name(unsigned r) {
  static constexpr std::string_view names[16] = {"r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7",
                                                 "r8", "sb", "sl", "fp", "ip", "sp", "lr", "pc"};
  return std::string(names[r & 15]);
}

// Immediate as Capstone prints it: small values in decimal, the rest in hex.
inline std::string imm_text(std::int64_t v) {
  std::string sign = v < 0 ? "-" : "";
  std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-v) : static_cast<std::uint64_t>(v);
  if (mag <= 9) return "#" + sign + std::to_string(mag);
  return "#" + sign + "0x" + hex_lower(mag);
}

enum class DpOp : unsigned { And = 0, Eor = 1, Sub = 2, Add = 4, Cmp = 10, Orr = 12, Mov = 13 };

inline std::optional<std::string_view> dp_name(unsigned opcode) {
  switch (opcode) {
    case 0: return "and";
    case 1: return "eor";
    case 2: return "sub";
    case 4: return "add";
    case 10: return "cmp";
    case 12: return "orr";
    case 13: return "mov";
    default: return std::nullopt;
  }
}
}  // namespace arm

struct Instr {
  std::uint64_t address = 0;
  std::uint32_t raw = 0;
  std::string mnemonic;
  std::string op_str;
  std::vector<Operand> operands;
  InstrKind kind = InstrKind::Other;
  std::optional<std::uint64_t> branch_target;
  std::uint32_t cond = arm::kCondAl;
  std::uint16_t reglist = 0;  // block transfers only

  bool is_undef() const { return mnemonic == "undef"; }
  bool conditional() const { return cond != arm::kCondAl; }
  bool is_control_transfer() const {
    return kind == InstrKind::Branch || kind == InstrKind::BranchLink ||
           kind == InstrKind::IndirectTransfer || kind == InstrKind::Return;
  }
  std::string text() const { return op_str.empty() ? mnemonic : mnemonic + " " + op_str; }

  bool operator==(const Instr&) const = default;
};

inline Instr make_undef(std::uint32_t word, std::uint64_t address) {
  Instr in;
  in.address = address;
  in.raw = word;
  in.mnemonic = "undef";
  in.kind = InstrKind::Other;
  return in;
}

// Pluggable ISA front end; only ARM32 is provided.
class IsaDecoder {
 public:
  virtual ~IsaDecoder() = default;
  virtual std::string_view name() const = 0;
  virtual std::optional<Instr> decode(std::uint32_t word, std::uint64_t address) const = 0;
};

class Arm32Decoder final : public IsaDecoder {
 public:
  std::string_view name() const override { return "arm32"; }

  std::optional<Instr> decode(std::uint32_t w, std::uint64_t address) const override {
    if (address % 4 != 0) return std::nullopt;
    const std::uint32_t cond = w >> 28;
    if (cond == 0xF) return std::nullopt;

    Instr in;
    in.address = address;
    in.raw = w;
    in.cond = cond;
    const std::string sfx(arm::kCondSuffix[cond]);

    // BX Rm
    if ((w & 0x0FFFFFF0u) == 0x012FFF10u) {
      const unsigned rm = w & 0xF;
      in.mnemonic = "bx" + sfx;
      in.op_str = arm::reg_name(rm);
      in.operands = {{OperandClass::Reg, in.op_str}};
      in.kind = rm == arm::kLr ? InstrKind::Return : InstrKind::IndirectTransfer;
      return in;
    }

    const unsigned top3 = (w >> 25) & 7;
    if (top3 == 0b101) return decode_branch(in, w, sfx);
    if (top3 == 0b100) return decode_block(in, w, sfx);
    if (top3 == 0b010) return decode_ldst(in, w, sfx);
    if (top3 == 0b000 || top3 == 0b001) return decode_dp(in, w, sfx);
    return std::nullopt;
  }

 private:
  static std::optional<Instr> decode_branch(Instr& in, std::uint32_t w, const std::string& sfx) {
    const bool link = (w >> 24) & 1;
    std::int64_t off = static_cast<std::int32_t>(w << 8) >> 8;  // sign-extend imm24
    off *= 4;
    const std::uint64_t target = static_cast<std::uint64_t>(static_cast<std::int64_t>(in.address) + 8 + off) & 0xFFFFFFFFull;
    in.mnemonic = (link ? "bl" : "b") + sfx;
    in.op_str = "#0x" + hex_lower(target);
    in.operands = {{OperandClass::Label, in.op_str}};
    in.kind = link ? InstrKind::BranchLink : InstrKind::Branch;
    in.branch_target = target;
    return in;
  }

  static std::string reglist_text(std::uint16_t list) {
    std::string s = "{";
    bool first = true;
    for (unsigned r = 0; r < 16; ++r) {
      if (!(list & (1u << r))) continue;
      if (!first) s += ", ";
      s += arm::reg_name(r);
      first = false;
    }
    return s + "}";
  }

  static std::optional<Instr> decode_block(Instr& in, std::uint32_t w, const std::string& sfx) {
    const bool p = (w >> 24) & 1, u = (w >> 23) & 1, s = (w >> 22) & 1, wb = (w >> 21) & 1, l = (w >> 20) & 1;
    const unsigned rn = (w >> 16) & 0xF;
    const auto list = static_cast<std::uint16_t>(w & 0xFFFF);
    if (s || list == 0 || rn == arm::kPc) return std::nullopt;
    if (wb && (list & (1u << rn))) return std::nullopt;
    const int count = std::popcount(list);
    const bool stack_form = rn == arm::kSp && wb && count >= 2;

    if (!l && p && !u) {  // STMDB / PUSH
      if (list & (1u << arm::kPc)) return std::nullopt;
      in.mnemonic = (stack_form ? "push" : "stmdb") + sfx;
    } else if (l && !p && u) {  // LDMIA / POP
      if (list & (1u << arm::kPc)) {
        if (!(rn == arm::kSp && wb)) return std::nullopt;
        in.kind = InstrKind::Return;
      }
      in.mnemonic = (stack_form ? "pop" : "ldm") + sfx;
    } else {
      return std::nullopt;
    }
    if (in.kind != InstrKind::Return) in.kind = InstrKind::PushPop;
    in.reglist = list;
    if (!stack_form) {
      const std::string base = arm::reg_name(rn) + (wb ? "!" : "");
      in.operands.push_back({OperandClass::Reg, base});
      in.op_str = base + ", ";
    }
    in.op_str += reglist_text(list);
    for (unsigned r = 0; r < 16; ++r)
      if (list & (1u << r)) in.operands.push_back({OperandClass::Reg, arm::reg_name(r)});
    return in;
  }

  static std::optional<Instr> decode_ldst(Instr& in, std::uint32_t w, const std::string& sfx) {
    const bool p = (w >> 24) & 1, u = (w >> 23) & 1, b = (w >> 22) & 1, wb = (w >> 21) & 1, l = (w >> 20) & 1;
    if (!p || wb) return std::nullopt;  // offset addressing only
    const unsigned rn = (w >> 16) & 0xF, rt = (w >> 12) & 0xF;
    if (rt == arm::kPc) return std::nullopt;
    const std::uint32_t imm = w & 0xFFF;
    in.mnemonic = std::string(l ? "ldr" : "str") + (b ? "b" : "") + sfx;
    std::string mem = "[" + arm::reg_name(rn);
    if (imm == 0 && !u)
      mem += ", #-0";
    else if (imm != 0)
      mem += ", " + arm::imm_text(u ? static_cast<std::int64_t>(imm) : -static_cast<std::int64_t>(imm));
    mem += "]";
    in.operands = {{OperandClass::Reg, arm::reg_name(rt)}, {OperandClass::Mem, mem}};
    in.op_str = arm::reg_name(rt) + ", " + mem;
    in.kind = InstrKind::LoadStore;
    return in;
  }

  static std::optional<Instr> decode_dp(Instr& in, std::uint32_t w, const std::string& sfx) {
    const bool imm_form = (w >> 25) & 1;
    const unsigned opcode = (w >> 21) & 0xF;
    const bool s = (w >> 20) & 1;
    const unsigned rn = (w >> 16) & 0xF, rd = (w >> 12) & 0xF;
    const auto name = arm::dp_name(opcode);
    if (!name) return std::nullopt;

    Operand op2;
    unsigned rm = 0;
    if (imm_form) {
      const std::uint32_t imm8 = w & 0xFF, rot = ((w >> 8) & 0xF) * 2;
      const std::uint32_t value = std::rotr(imm8, static_cast<int>(rot));
      op2 = {OperandClass::Imm, arm::imm_text(value)};
    } else {
      if ((w & 0xFF0) != 0) return std::nullopt;  // shifted register forms are outside the subset
      rm = w & 0xF;
      if (rm == arm::kPc) return std::nullopt;
      op2 = {OperandClass::Reg, arm::reg_name(rm)};
    }

    const bool is_mov = opcode == static_cast<unsigned>(arm::DpOp::Mov);
    const bool is_cmp = opcode == static_cast<unsigned>(arm::DpOp::Cmp);
    if (is_mov && rn != 0) return std::nullopt;
    if (is_cmp && (!s || rd != 0)) return std::nullopt;
    if (!is_mov && rn == arm::kPc) return std::nullopt;

    in.kind = InstrKind::DataProc;
    if (rd == arm::kPc && !is_cmp) {
      // Only MOV PC, Rm is accepted as a PC write.
      if (!is_mov || s || imm_form) return std::nullopt;
      in.kind = rm == arm::kLr ? InstrKind::Return : InstrKind::IndirectTransfer;
    }

    in.mnemonic = std::string(*name) + (s && !is_cmp ? "s" : "") + sfx;
    if (is_cmp) {
      in.operands = {{OperandClass::Reg, arm::reg_name(rn)}, op2};
    } else if (is_mov) {
      in.operands = {{OperandClass::Reg, arm::reg_name(rd)}, op2};
    } else {
      in.operands = {{OperandClass::Reg, arm::reg_name(rd)}, {OperandClass::Reg, arm::reg_name(rn)}, op2};
    }
    for (std::size_t i = 0; i < in.operands.size(); ++i) {
      if (i) in.op_str += ", ";
      in.op_str += in.operands[i].text;
    }
    return in;
  }
};

inline const Arm32Decoder& default_decoder() {
  static const Arm32Decoder d;
  return d;
}

inline std::optional<Instr> decode(std::uint32_t word, std::uint64_t address) {
  return default_decoder().decode(word, address);
}

// Decodes every aligned word; undecodable words become `undef` placeholders.
inline std::vector<Instr> linear_sweep(ByteView region, std::uint64_t base,
                                       const IsaDecoder& isa = default_decoder()) {
  if (region.size() % 4 != 0 || base % 4 != 0)
    throw Error(ErrorKind::UnalignedRegion, "region of " + std::to_string(region.size()) +
                                                " bytes at 0x" + hex_lower(base));
  LeReader rd(region);
  std::vector<Instr> out;
  out.reserve(region.size() / 4);
  for (std::size_t off = 0; off < region.size(); off += 4) {
    const std::uint32_t w = rd.u32(off);
    auto in = isa.decode(w, base + off);
    out.push_back(in ? std::move(*in) : make_undef(w, base + off));
  }
  return out;
}

}  // namespace plcbinx
