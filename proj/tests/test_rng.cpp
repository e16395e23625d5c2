#include <gtest/gtest.h>

#include <cmath>

#include "nextclip/rng.hpp"

using nextclip::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDifferByName) {
  Rng a = Rng::derive(1, "alpha");
  Rng b = Rng::derive(1, "noise");
  Rng c = Rng::derive(1, "alpha");
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_TRUE(Rng::derive(1, "alpha") == c);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng r(3);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto x = r.uniform_int(2, 6);
    ASSERT_GE(x, 2);
    ASSERT_LE(x, 6);
    ++hits[x - 2];
  }
  for (int h : hits) EXPECT_GT(h, 850);
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.015);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, StateRoundTripContinuesStream) {
  Rng r(5);
  for (int i = 0; i < 10; ++i) r.normal();
  Rng copy;
  copy.set_state(r.state());
  for (int i = 0; i < 10; ++i) ASSERT_EQ(r.normal(), copy.normal());
}
