#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pcb/error.hpp"
#include "pcb/parameters.hpp"
#include "pcb/rng.hpp"
#include "pcb/tensor.hpp"

using namespace pcb;

TEST(Tensor, ConstructionAndShape) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor::full(2, 2, 0.5), Tensor::matrix(2, 2, {0.5, 0.5, 0.5, 0.5}));
  Tensor r = Tensor::row({1, 2});
  EXPECT_EQ(r.rows(), 1u);
  EXPECT_EQ(r.cols(), 2u);
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::row({1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, SameSeedSameStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDependOnlyOnPath) {
  Rng a = Rng::derive(9, {1, 2});
  Rng noise(1);
  for (int i = 0; i < 10; ++i) noise.next_u64();
  Rng b = Rng::derive(9, {1, 2});
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng::derive(9, {1, 2}).next_u64(), Rng::derive(9, {2, 1}).next_u64());
  EXPECT_NE(Rng::derive(9, {1}).next_u64(), Rng::derive(10, {1}).next_u64());
}

TEST(Rng, UniformMomentsAndRange) {
  Rng rng(3);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  // Mean 1/2, variance 1/12; 5 sigma bands.
  EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 2e-3);
}

TEST(Rng, NormalAndGumbelMoments) {
  Rng rng(4);
  const int n = 200000;
  double ns = 0, nq = 0, gs = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    ns += z;
    nq += z * z;
    gs += rng.gumbel();
  }
  EXPECT_NEAR(ns / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(nq / n, 1.0, 0.02);
  // Gumbel(0, 1) mean is the Euler-Mascheroni constant; sd pi/sqrt(6).
  EXPECT_NEAR(gs / n, 0.5772156649, 5.0 * 1.2825 / std::sqrt(n));
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng rng(8);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.uniform_int(-2, 2);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 2);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_THROW(rng.uniform_int(3, 2), UsageError);
}

TEST(Parameters, StoreAndInitialisers) {
  ParameterStore store;
  Rng rng(1);
  const ParamId w = store.add("w", xavier_uniform(30, 20, rng));
  EXPECT_EQ(store.name(w), "w");
  EXPECT_EQ(store.find("w"), w);
  EXPECT_FALSE(store.find("missing").has_value());
  const double limit = std::sqrt(6.0 / 50.0);
  for (double v : store.value(w).values()) {
    ASSERT_LE(std::abs(v), limit);
  }
  EXPECT_EQ(store.scalar_count(), 600u);
  Gradients g = store.zero_gradients();
  g[w][0] = 3.0;
  g[w][1] = 4.0;
  EXPECT_DOUBLE_EQ(g.squared_norm(), 25.0);
}
