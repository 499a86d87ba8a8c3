#include "kvsem/fingerprint.hpp"

#include <gtest/gtest.h>

#include <random>

namespace kvsem {
namespace {

FpOp read(const Key& k, Value v) { return {OpKind::Read, k, v}; }
FpOp write(const Key& k, Value v) { return {OpKind::Write, k, v}; }

TEST(Fingerprint, CombineRecordsFirstRead) {
  Fingerprint fp;
  fp = fp.combine(read("k", 1));
  EXPECT_EQ(fp.read_of("k"), 1);
  EXPECT_FALSE(fp.write_of("k").has_value());
}

TEST(Fingerprint, CombineIgnoresReadAfterWrite) {
  Fingerprint fp;
  fp = fp.combine(write("k", 1));
  fp = fp.combine(read("k", 1));
  EXPECT_FALSE(fp.read_of("k").has_value());
  EXPECT_EQ(fp.write_of("k"), 1);
  EXPECT_EQ(fp.ops().size(), 1u);
}

TEST(Fingerprint, CombineIgnoresSecondRead) {
  Fingerprint fp;
  fp = fp.combine(read("k", 1));
  Fingerprint again = fp.combine(read("k", 1));
  EXPECT_EQ(fp, again);
  // Even a read claiming a different value is dropped: the first read wins.
  Fingerprint other = fp.combine(read("k", 2));
  EXPECT_EQ(fp, other);
}

TEST(Fingerprint, CombineLastWriteWins) {
  Fingerprint fp;
  fp = fp.combine(write("k", 1));
  fp = fp.combine(write("k", 2));
  EXPECT_EQ(fp.write_of("k"), 2);
  EXPECT_EQ(fp.ops().size(), 1u);
}

TEST(Fingerprint, CombineEmptyOpIsIdentity) {
  Fingerprint fp;
  fp = fp.combine(read("k", 3));
  EXPECT_EQ(fp, fp.combine(std::nullopt));
}

TEST(Fingerprint, ReadThenWriteKeepsBoth) {
  Fingerprint fp;
  fp = fp.combine(read("k", 0));
  fp = fp.combine(write("k", 1));
  EXPECT_EQ(fp.read_of("k"), 0);
  EXPECT_EQ(fp.write_of("k"), 1);
  EXPECT_EQ(fp.ops().size(), 2u);
}

TEST(Fingerprint, AtMostOneReadAndWritePerKeyAfterAnyCombineSequence) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Fingerprint fp;
    for (int i = 0; i < 12; ++i) {
      Key k = "k" + std::to_string(rng() % 3);
      Value v = static_cast<Value>(rng() % 5);
      fp = fp.combine(rng() % 2 ? read(k, v) : write(k, v));
    }
    std::map<Key, int> reads, writes;
    for (const auto& op : fp.ops()) {
      (op.kind == OpKind::Read ? reads : writes)[op.key]++;
    }
    for (const auto& [k, n] : reads) EXPECT_LE(n, 1) << k;
    for (const auto& [k, n] : writes) EXPECT_LE(n, 1) << k;
  }
}

TEST(Fingerprint, StrIsSortedAndStable) {
  Fingerprint fp;
  fp.add_write("b", 2);
  fp.add_read("a", 1);
  EXPECT_EQ(fp.str(), "{(R,a,1),(W,b,2)}");
}

}  // namespace
}  // namespace kvsem
