#include <gtest/gtest.h>

#include "plcbinx/arm_encoder.hpp"
#include "plcbinx/disasm.hpp"
#include "support.hpp"

using namespace plcbinx;
using namespace plcbinx::arm;

TEST(Disasm, MatchesReferenceDisassembler) {
  const auto rows = testkit::read_reference_fixture(testkit::fixture_dir() / "capstone_reference.tsv");
  ASSERT_GE(rows.size(), 500u);
  std::size_t bad = 0;
  for (const auto& r : rows) {
    const auto in = decode(r.word, r.address);
    ASSERT_TRUE(in) << std::hex << r.word;
    if (in->text() != r.capstone) {
      ++bad;
      ADD_FAILURE() << std::hex << r.word << ": '" << in->text() << "' vs '" << r.capstone << "'";
    }
  }
  EXPECT_EQ(bad, 0u);
}

TEST(Disasm, EncoderRoundTrip) {
  struct Case {
    std::uint32_t word;
    const char* text;
    InstrKind kind;
  };
  const Case cases[] = {
      {mov_reg(kR3, kR0), "mov r3, r0", InstrKind::DataProc},
      {cmp_imm(kR3, 2), "cmp r3, #2", InstrKind::DataProc},
      {ldst(true, false, kR0, kSp, 8), "ldr r0, [sp, #8]", InstrKind::LoadStore},
      {ldst(false, true, kR1, kR2, -4), "strb r1, [r2, #-4]", InstrKind::LoadStore},
      {push(regs({kR4, kLr})), "push {r4, lr}", InstrKind::PushPop},
      {pop(regs({kR4, kPc})), "pop {r4, pc}", InstrKind::Return},
      {bx(kLr), "bx lr", InstrKind::Return},
      {bx(kR3), "bx r3", InstrKind::IndirectTransfer},
      {mov_pc(kR6), "mov pc, r6", InstrKind::IndirectTransfer},
  };
  for (const auto& c : cases) {
    const auto in = decode(c.word, 0x1000);
    ASSERT_TRUE(in) << c.text;
    EXPECT_EQ(in->text(), c.text);
    EXPECT_EQ(in->kind, c.kind) << c.text;
    EXPECT_EQ(in->raw, c.word);
  }
}

TEST(Disasm, BranchTargets) {
  const auto bl = decode(branch(0x401000, 0x4012A0, true), 0x401000);
  ASSERT_TRUE(bl);
  EXPECT_EQ(bl->kind, InstrKind::BranchLink);
  EXPECT_EQ(bl->branch_target, 0x4012A0u);
  EXPECT_EQ(bl->text(), "bl #0x4012a0");

  const auto back = decode(branch(0x2000, 0x1f00, false, 0xB), 0x2000);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->mnemonic, "blt");
  EXPECT_EQ(back->branch_target, 0x1f00u);
  EXPECT_TRUE(back->conditional());
}

TEST(Disasm, BranchRangeIsChecked) {
  EXPECT_THROW(branch(0, 0x4000000, false), Error);
  EXPECT_THROW(branch(0, 0x1002, false), Error);
}

TEST(Disasm, UndecodableWordsBecomePlaceholders) {
  EXPECT_FALSE(decode(0xF0000000u, 0));
  EXPECT_FALSE(decode(mov_reg(0, 1), 2));
  const Bytes b = testkit::words_to_bytes({mov_reg(0, 1), 0xF0000000u, bx(kLr)});
  const auto out = linear_sweep(ByteView(b), 0x100);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_TRUE(out[1].is_undef());
  EXPECT_EQ(out[1].address, 0x104u);
  EXPECT_EQ(out[2].address, 0x108u);
}

TEST(Disasm, UnalignedSweepRejected) {
  const Bytes b(6, 0);
  try {
    linear_sweep(ByteView(b), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnalignedRegion);
  }
  const Bytes ok(8, 0);
  EXPECT_THROW(linear_sweep(ByteView(ok), 2), Error);
}

TEST(Disasm, ConditionSuffixes) {
  const auto in = decode(dp_reg(DpOp::Mov, kR0, 0, kR1, false, 0x1), 0);
  ASSERT_TRUE(in);
  EXPECT_EQ(in->mnemonic, "movne");
  const auto s = decode(dp_reg(DpOp::And, kR0, kR0, kR1, true), 0);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->mnemonic, "ands");
}

TEST(Disasm, RotatedImmediates) {
  EXPECT_EQ(encode_rotated_imm(0xFF), 0xFFu);
  EXPECT_TRUE(encode_rotated_imm(0xFF000000u));
  EXPECT_FALSE(encode_rotated_imm(0x101));
  const auto in = decode(mov_imm(kR2, 0x3F0), 0);
  ASSERT_TRUE(in);
  EXPECT_EQ(in->text(), "mov r2, #0x3f0");
}
