#pragma once

// Encoder for the same ARM32 subset the decoder accepts. Used by the corpus
// forge and by tests that need specific instruction words.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <optional>

#include "plcbinx/common.hpp"
#include "plcbinx/disasm.hpp"

namespace plcbinx::arm {

inline constexpr unsigned kR0 = 0, kR1 = 1, kR2 = 2, kR3 = 3, kR4 = 4, kR5 = 5, kR6 = 6, kR7 = 7;

inline std::uint16_t regs(std::initializer_list<unsigned> rs) {
  std::uint16_t m = 0;
  for (unsigned r : rs) m |= static_cast<std::uint16_t>(1u << r);
  return m;
}

// Canonical rotated-immediate encoding (smallest rotation), if one exists.
inline std::optional<std::uint32_t> encode_rotated_imm(std::uint32_t value) {
  for (unsigned rot = 0; rot < 16; ++rot) {
    const std::uint32_t v = std::rotl(value, static_cast<int>(rot * 2));
    if (v <= 0xFF) return (rot << 8) | v;
  }
  return std::nullopt;
}

inline std::uint32_t dp_reg(DpOp op, unsigned rd, unsigned rn, unsigned rm, bool s = false,
                            std::uint32_t cond = kCondAl) {
  if (op == DpOp::Cmp) s = true;
  return (cond << 28) | (static_cast<unsigned>(op) << 21) | (s ? 1u << 20 : 0) | (rn << 16) | (rd << 12) | rm;
}

inline std::uint32_t dp_imm(DpOp op, unsigned rd, unsigned rn, std::uint32_t imm, bool s = false,
                            std::uint32_t cond = kCondAl) {
  if (op == DpOp::Cmp) s = true;
  auto enc = encode_rotated_imm(imm);
  if (!enc) throw Error(ErrorKind::EncodingOverflow, "immediate 0x" + hex_lower(imm) + " not encodable");
  return (cond << 28) | (1u << 25) | (static_cast<unsigned>(op) << 21) | (s ? 1u << 20 : 0) | (rn << 16) |
         (rd << 12) | *enc;
}

inline std::uint32_t mov_reg(unsigned rd, unsigned rm) { return dp_reg(DpOp::Mov, rd, 0, rm); }
inline std::uint32_t mov_imm(unsigned rd, std::uint32_t imm) { return dp_imm(DpOp::Mov, rd, 0, imm); }
inline std::uint32_t cmp_reg(unsigned rn, unsigned rm) { return dp_reg(DpOp::Cmp, 0, rn, rm); }
inline std::uint32_t cmp_imm(unsigned rn, std::uint32_t imm) { return dp_imm(DpOp::Cmp, 0, rn, imm); }

inline std::uint32_t ldst(bool load, bool byte, unsigned rt, unsigned rn, std::int32_t offset,
                          std::uint32_t cond = kCondAl) {
  const bool up = offset >= 0;
  const std::uint32_t mag = static_cast<std::uint32_t>(up ? offset : -offset);
  if (mag > 0xFFF) throw Error(ErrorKind::EncodingOverflow, "load/store offset out of range");
  return (cond << 28) | (0b010u << 25) | (1u << 24) | (up ? 1u << 23 : 0) | (byte ? 1u << 22 : 0) |
         (load ? 1u << 20 : 0) | (rn << 16) | (rt << 12) | mag;
}

inline std::uint32_t push(std::uint16_t list, std::uint32_t cond = kCondAl) {
  return (cond << 28) | 0x092D0000u | list;  // STMDB sp!, {list}
}

inline std::uint32_t pop(std::uint16_t list, std::uint32_t cond = kCondAl) {
  return (cond << 28) | 0x08BD0000u | list;  // LDMIA sp!, {list}
}

inline std::uint32_t bx(unsigned rm, std::uint32_t cond = kCondAl) { return (cond << 28) | 0x012FFF10u | rm; }

inline std::uint32_t mov_pc(unsigned rm) { return dp_reg(DpOp::Mov, kPc, 0, rm); }

inline std::uint32_t branch(std::uint64_t from, std::uint64_t to, bool link = false, std::uint32_t cond = kCondAl) {
  const std::int64_t delta = static_cast<std::int64_t>(to) - static_cast<std::int64_t>(from) - 8;
  if (delta % 4 != 0 || delta < -(1ll << 25) || delta >= (1ll << 25))
    throw Error(ErrorKind::EncodingOverflow, "branch from 0x" + hex_lower(from) + " to 0x" + hex_lower(to));
  const std::uint32_t imm24 = static_cast<std::uint32_t>(delta / 4) & 0xFFFFFFu;
  return (cond << 28) | (0b101u << 25) | (link ? 1u << 24 : 0) | imm24;
}

}  // namespace plcbinx::arm
