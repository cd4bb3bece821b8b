#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ffc/numkit.hpp"
#include "oracles.hpp"

namespace ffc {
namespace {

TEST(Softmax, EqualScoresAreUniform) {
  const std::vector<double> s{2.5, 2.5, 2.5};
  for (double tau : {0.07, 1.0, 30.0}) {
    const auto p = softmax(s, tau);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, ClosedFormTwoClass) {
  const auto p = softmax(std::vector<double>{1.0, 0.0}, 1.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
}

TEST(Softmax, HighTemperatureLimit) {
  const auto p = softmax(std::vector<double>{1.0, 0.0}, 1e6);
  EXPECT_NEAR(p[0], 0.5, 1e-6);
  EXPECT_NEAR(p[1], 0.5, 1e-6);
}

TEST(Softmax, StableForLargeMagnitudes) {
  const auto p = softmax(std::vector<double>{1e3, -1e3, 999.0});
  double sum = 0;
  for (double v : p.values()) {
    EXPECT_TRUE(std::isfinite(v));
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Softmax, RejectsBadInput) {
  EXPECT_THROW(softmax(std::vector<double>{1.0, NAN}), InvalidArgument);
  EXPECT_THROW(softmax(std::vector<double>{1.0, 0.0}, 0.0), InvalidArgument);
  EXPECT_THROW(softmax(std::vector<double>{1.0, 0.0}, -1.0), InvalidArgument);
}

TEST(KlDiv, ClosedForms) {
  const auto u = ProbVector::uniform(2);
  EXPECT_NEAR(kl_div(ProbVector({1.0, 0.0}), u), std::log(2.0), 1e-15);
  EXPECT_NEAR(kl_div(ProbVector({0.9, 0.1}), u), 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-15);
  EXPECT_NEAR(kl_div(ProbVector({0.9, 0.1}), u), 0.3681, 1e-4);
}

TEST(KlDiv, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = rng.uniform() + 1e-3;
    for (auto& v : b) v = rng.uniform() + 1e-3;
    const auto p = softmax(a), q = softmax(b);
    EXPECT_GE(kl_div(p, q), 0.0);
    EXPECT_NEAR(kl_div(p, p), 0.0, 1e-12);
  }
}

TEST(KlDiv, Errors) {
  EXPECT_THROW(kl_div(ProbVector({0.5, 0.5}), ProbVector({1.0, 0.0})), InvalidArgument);
  EXPECT_THROW(kl_div(ProbVector({1.0}), ProbVector({0.5, 0.5})), InvalidArgument);
}

TEST(ProbVector, RejectsInvalid) {
  EXPECT_THROW(ProbVector({0.5, 0.4}), InvalidArgument);
  EXPECT_THROW(ProbVector({1.5, -0.5}), InvalidArgument);
  EXPECT_NO_THROW(ProbVector({0.5, 0.5 + 1e-10}));
}

TEST(Cosine, Basics) {
  const std::vector<double> u{1.0, 2.0, -3.0};
  std::vector<double> neg{-1.0, -2.0, 3.0};
  EXPECT_NEAR(cosine(u, u), 1.0, 1e-15);
  EXPECT_NEAR(cosine(u, neg), -1.0, 1e-15);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_THROW(cosine(u, std::vector<double>{0, 0, 0}), InvalidArgument);
}

TEST(CrossEntropy, SymmetricAndSaturated) {
  auto r = cross_entropy_with_grad(std::vector<double>{0.0, 0.0}, 0);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.grad[0], -0.5, 1e-15);
  EXPECT_NEAR(r.grad[1], 0.5, 1e-15);
  r = cross_entropy_with_grad(std::vector<double>{10.0, -10.0}, 0);
  EXPECT_NEAR(r.loss, 0.0, 1e-8);
  EXPECT_NEAR(r.grad[0], 0.0, 1e-8);
  EXPECT_NEAR(r.grad[1], 0.0, 1e-8);
  EXPECT_THROW(cross_entropy_with_grad(std::vector<double>{0.0, 0.0}, 2), InvalidArgument);
}

TEST(CrossEntropy, MatchesFiniteDifferences) {
  Rng rng(5);
  int within_1e6 = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> logits(4);
    for (auto& v : logits) v = rng.normal(0.0, 2.0);
    const auto label = static_cast<std::size_t>(rng.below(4));
    const auto analytic = cross_entropy_with_grad(logits, label).grad;
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) { return cross_entropy_with_grad(x, label).loss; }, logits, 1e-5);
    const double err = oracle::relative_error(analytic, numeric);
    EXPECT_LT(err, 1e-5);
    within_1e6 += err < 1e-6;
  }
  EXPECT_GE(within_1e6, 95);
}

TEST(AdamW, ZeroGradNoDecayLeavesParams) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const auto before = p;
  auto s = OptimizerState::for_params(3, {1e-3, 0.9, 0.999, 1e-8, 0.0});
  adamw_step(p, std::vector<double>(3, 0.0), s);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamW, FirstStepIsSignLike) {
  std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> g{0.3, -5.0, 1e-2};
  const double lr = 1e-3;
  auto s = OptimizerState::for_params(3, {lr, 0.9, 0.999, 1e-8, 0.0});
  adamw_step(p, g, s);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = -lr * g[i] / (std::fabs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i], expect, 1e-15);
    EXPECT_NEAR(p[i], -lr * (g[i] > 0 ? 1 : -1), 1e-9);
  }
}

TEST(AdamW, WeightDecayScalesParams) {
  std::vector<double> p{1.0, -2.0};
  const double lr = 0.1, wd = 0.01;
  auto s = OptimizerState::for_params(2, {lr, 0.9, 0.999, 1e-8, wd});
  adamw_step(p, std::vector<double>(2, 0.0), s);
  EXPECT_NEAR(p[0], 1.0 * (1 - lr * wd), 1e-15);
  EXPECT_NEAR(p[1], -2.0 * (1 - lr * wd), 1e-15);
}

TEST(AdamW, ParamGroupsUseTheirOwnRate) {
  std::vector<double> p{0.0, 0.0, 0.0, 0.0};
  auto s = OptimizerState::for_params(4, {1e-5, 0.9, 0.999, 1e-8, 0.0});
  s.groups.push_back({2, 2, 5e-4});
  adamw_step(p, std::vector<double>{1, 1, 1, 1}, s);
  EXPECT_NEAR(p[0], -1e-5 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p[1], -1e-5 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p[2], -5e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p[3], -5e-4 / (1.0 + 1e-8), 1e-18);
}

TEST(AdamW, DeterministicAndChecksLengths) {
  Rng rng(3);
  std::vector<double> p1(10), g(10);
  for (auto& v : p1) v = rng.normal();
  for (auto& v : g) v = rng.normal();
  auto p2 = p1;
  auto s1 = OptimizerState::for_params(10), s2 = OptimizerState::for_params(10);
  for (int i = 0; i < 5; ++i) {
    adamw_step(p1, g, s1);
    adamw_step(p2, g, s2);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_THROW(adamw_step(p1, std::vector<double>(3), s1), InvalidArgument);
}

TEST(Chi2, BoundaryAndClosedForm) {
  for (unsigned k : {1u, 2u, 5u, 17u}) EXPECT_EQ(chi2_sf(0.0, k), 1.0);
  for (double x : {0.1, 1.0, 3.7, 12.0, 40.0}) EXPECT_NEAR(chi2_sf(x, 2), std::exp(-x / 2), 1e-10);
  EXPECT_NEAR(chi2_sf(3.841, 1), 0.0500, 1e-4);
  EXPECT_THROW(chi2_sf(-1.0, 1), InvalidArgument);
}

TEST(Chi2, MatchesNumericIntegration) {
  for (unsigned k : {1u, 2u, 3u, 4u, 7u, 12u})
    for (double x : {0.05, 0.5, 1.0, 3.841, 6.0, 15.0, 30.0}) EXPECT_NEAR(chi2_sf(x, k), oracle::chi2_sf(x, k), 1e-8) << x << " " << k;
}

TEST(Chi2, MonotoneDecreasing) {
  for (unsigned k : {1u, 3u, 8u}) {
    double prev = 1.0;
    for (double x = 0.0; x < 50.0; x += 0.25) {
      const double p = chi2_sf(x, k);
      EXPECT_LE(p, prev);
      prev = p;
    }
  }
}

TEST(Rng, ReproducibleAndStreamsDiffer) {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000000; ++i) {
    const auto x = a.next_u32();
    ASSERT_EQ(x, b.next_u32());
    differs = differs || x != c.next_u32();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, KnownFirstDraws) {
  // Pinned so any change to the generator or seeding is caught.
  Rng r(0, 0);
  EXPECT_EQ(r.next_u32(), 3234325189u);
  EXPECT_EQ(r.next_u32(), 1963755818u);
  EXPECT_EQ(r.next_u32(), 1465678534u);
  EXPECT_EQ(Rng(42, 7).uniform(), 0.55423178781596805);
  EXPECT_NE(Rng(0, 0).next_u64(), Rng(1, 0).next_u64());
}

TEST(Rng, DistributionMoments) {
  Rng r(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0;
  for (int i = 0; i < n; ++i) {
    su += r.uniform();
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sg += r.gamma(0.5);
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
  EXPECT_NEAR(sg / n, 0.5, 0.01);
}

TEST(Rng, DirichletOnSimplexAndConcentrates) {
  Rng r(4);
  for (double conc : {0.05, 0.5, 1.0, 1e6}) {
    const auto p = r.dirichlet(5, conc);
    double s = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    if (conc == 1e6) {
      for (double v : p) EXPECT_NEAR(v, 0.2, 0.01);
    }
  }
}

TEST(Rng, BelowIsInRangeAndShuffleIsPermutation) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Matrix, MatvecAgainstLoops) {
  Rng r(2);
  Matrix m(3, 4);
  for (double& v : m.data()) v = r.normal();
  std::vector<double> x{1, -2, 0.5, 3};
  const auto y = matvec(m, x);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < 4; ++j) acc += m(i, j) * x[j];
    EXPECT_NEAR(y[i], acc, 1e-14);
  }
  const auto yt = matvec_transposed(m, std::vector<double>{1, 2, 3});
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(yt[j], m(0, j) + 2 * m(1, j) + 3 * m(2, j), 1e-14);
  EXPECT_THROW(matvec(m, std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
  EXPECT_THROW(Matrix(1, 1, std::vector<double>{INFINITY}), InvalidArgument);
}

}  // namespace
}  // namespace ffc
