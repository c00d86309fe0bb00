#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mbclip/bounds.hpp"

namespace mbclip {
namespace {

// Agreement to five significant digits.
void expect_5sig(double got, double want) {
  EXPECT_NEAR(got, want, 0.5e-5 * std::abs(want)) << "got " << got << " want " << want;
}

TEST(Thm9Rate, Examples) {
  EXPECT_EQ(thm9_rate(100, 1.0, 0.0, 0.0, 8), 0.0);
  // 0.1 * sqrt(2 + 1/64) = 0.1 * sqrt(2.015625)
  expect_5sig(thm9_rate(10000, 1.0, 1.0, 1.0, 64), 0.141972);
  const double r1 = thm9_rate(1000, 2.0, 0.7, 0.3, 16);
  EXPECT_NEAR(thm9_rate(2000, 2.0, 0.7, 0.3, 16), r1 * std::pow(2.0, -0.25), 1e-15);
}

TEST(Thm1Rate, Examples) {
  EXPECT_EQ(thm1_rate(100, 1.0, 0.0, 0.0, 8, 0.0), 0.0);
  expect_5sig(thm1_rate(10000, 1.0, 1.0, 1.0, 64, 0.1), 0.223002);
  const double T = 500, L = 1.5, gap = 0.8, sigma = 0.4, B = 32;
  EXPECT_DOUBLE_EQ(thm1_rate(500, L, gap, sigma, 32, 0.0),
                   std::sqrt(4 * L * gap + 2 * sigma * sigma / B) / std::pow(T, 0.25));
  EXPECT_THROW(thm1_rate(100, 1.0, 1.0, 1.0, 8, 1.0), HypothesisError);
}

TEST(Thm2Rate, Examples) {
  RateInputs in{10000, 1.0, 1.0, 1.0, 64, 4, 0.5, 1.0, 1.0};
  const auto r = thm2_rate(in);
  expect_5sig(r.bias, 1.0);
  expect_5sig(r.decaying, 0.24);
  expect_5sig(r.total, 1.24);
  EXPECT_EQ(r.total, r.bias + r.decaying);
  in.sigma = 0.0;
  EXPECT_EQ(thm2_rate(in).bias, 0.0);
}

TEST(Thm2Rate, HypothesisGuards) {
  RateInputs in{100, 1.0, 1.0, 1.0, 64, 4, 0.19, 1.0, 1.0};
  EXPECT_THROW(thm2_rate(in), HypothesisError);  // 0.19 < 1/5
  in.epsilon = 0.2;                               // equality: denominators vanish
  EXPECT_THROW(thm2_rate(in), HypothesisError);
  in.epsilon = 0.2 + 1e-9;
  EXPECT_NO_THROW(thm2_rate(in));
  EXPECT_GT(thm2_rate(in).bias, 0.0);
  in.epsilon = 1.0;
  EXPECT_THROW(thm2_rate(in), HypothesisError);
}

TEST(Thm2Rate, BiasIndependentOfT) {
  RateInputs a{100, 1.0, 2.0, 0.7, 64, 8, 0.3, 0.5, 2.0};
  RateInputs b = a;
  b.T = 1000000;
  EXPECT_EQ(thm2_rate(a).bias, thm2_rate(b).bias);
}

TEST(Thm1Cmax, Examples) {
  const double eta = 1.0 / (1.0 * std::sqrt(10000.0));
  expect_5sig(thm1_Cmax(0.5, eta, 1.0), std::sqrt(198.5));
  expect_5sig(thm1_Cmax(0.5, eta, 1.0), 14.0890);
  // Boundary: eta -> 2(1-eps)/((1-eps^2)L) sends C to 0.
  const double eps = 0.5;
  const double edge = 2 * (1 - eps) / ((1 - eps * eps) * 1.0);
  EXPECT_LT(thm1_Cmax(eps, edge * (1 - 1e-9), 1.0), 1e-3);
  EXPECT_THROW(thm1_Cmax(eps, edge, 1.0), HypothesisError);
  try {
    thm1_Cmax(eps, 2 * edge, 1.0);
  } catch (const HypothesisError& e) {
    EXPECT_STREQ(e.what(), "step size too large for dragger bound");
  }
}

TEST(Thm1Cmax, DecreasingInEpsilon) {
  for (double eta : {0.001, 0.01, 0.1}) {
    double prev = INFINITY;
    for (int i = 1; i < 100; ++i) {
      const double c = thm1_Cmax(i / 100.0, eta, 1.0);
      EXPECT_LT(c, prev);
      prev = c;
    }
  }
}

TEST(Lemma1Bound, Examples) {
  EXPECT_EQ(lemma1_bound(4, 0.0, 0.0, 1.0, 2.0), 0.0);
  expect_5sig(lemma1_bound(4, 0.5, 1.0, 1.0, 2.0), 0.661438);
  const double one = lemma1_bound(3, 0.3, 0.7, 1.1, 2.5);
  EXPECT_NEAR(lemma1_bound(12, 0.3, 0.7, 1.1, 2.5), one / 2.0, 1e-15);
}

TEST(Lemma1Bound, SquaredTimesBIsLinear) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_real_distribution<double> e(0.0, 1.0);
  auto sq_b = [](std::size_t b, double eps, double s2, double g2, double m2) {
    const double v = lemma1_bound(b, eps, std::sqrt(s2), std::sqrt(g2), std::sqrt(m2));
    return v * v * static_cast<double>(b);
  };
  for (int i = 0; i < 1000; ++i) {
    const double eps = e(rng);
    const std::size_t b = 1 + i % 20;
    const double g1 = u(rng), g2 = u(rng), m1 = u(rng), m2 = u(rng), s1 = u(rng), s2 = u(rng);
    const double whole = sq_b(b, eps, s1 + s2, g1 + g2, m1 + m2);
    const double parts = sq_b(b, eps, s1, g1, m1) + sq_b(b, eps, s2, g2, m2);
    EXPECT_NEAR(whole, parts, 1e-12 * (1 + whole));
  }
}

TEST(Rates, MonotoneDecreasingInT) {
  RateInputs in{1, 1.0, 1.0, 0.5, 32, 8, 0.3, 1.0, 2.0};
  double p9 = INFINITY, p1 = INFINITY, p2 = INFINITY;
  for (std::size_t T = 1; T <= 1u << 20; T *= 2) {
    in.T = T;
    EXPECT_LT(thm9_rate(T, 1.0, 1.0, 0.5, 32), p9);
    EXPECT_LT(thm1_rate(T, 1.0, 1.0, 0.5, 32, 0.3), p1);
    EXPECT_LT(thm2_rate(in).total, p2);
    p9 = thm9_rate(T, 1.0, 1.0, 0.5, 32);
    p1 = thm1_rate(T, 1.0, 1.0, 0.5, 32, 0.3);
    p2 = thm2_rate(in).total;
  }
}

// Independent brute-force oracle for the bias over a grid.
std::size_t brute_argmin(std::size_t lo, std::size_t hi, double eps, double sigma,
                         double (*c_of)(std::size_t)) {
  std::size_t best_b = 0;
  double best = INFINITY;
  for (std::size_t b = lo; b <= hi; ++b) {
    const double sb = std::sqrt(static_cast<double>(b));
    const double v = sigma / ((sb * eps - std::sqrt(eps - eps * eps)) * (1.0 + c_of(b)));
    if (v < best) {
      best = v;
      best_b = b;
    }
  }
  return best_b;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t b = lo; b <= hi; ++b) out.push_back(b);
  return out;
}

TEST(BiasSweep, ConstantScheduleFavoursLargestB) {
  RateInputs in{100, 1.0, 1.0, 1.0, 64, 1, 0.5, 1.0, 1.0};
  const auto sweep = bias_sweep(range(2, 64), in, [](std::size_t) { return 2.0; });
  EXPECT_EQ(sweep.argmin_b, 64u);
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    EXPECT_LT(sweep.points[i].second, sweep.points[i - 1].second);
  }
}

TEST(BiasSweep, DecayingScheduleHasInteriorMinimum) {
  RateInputs in{100, 1.0, 1.0, 1.0, 64, 1, 0.5, 1.0, 1.0};
  const auto sweep = bias_sweep(range(2, 64), in, sweet_spot_schedule);
  const std::size_t oracle = brute_argmin(2, 64, 0.5, 1.0, [](std::size_t b) {
    return 100.0 / static_cast<double>(b);
  });
  EXPECT_EQ(oracle, 4u);
  EXPECT_EQ(sweep.argmin_b, oracle);
  EXPECT_GT(sweep.argmin_b, 2u);
  EXPECT_LT(sweep.argmin_b, 64u);
}

TEST(BiasSweep, TieBreakAndEdges) {
  RateInputs in{100, 1.0, 1.0, 1.0, 64, 1, 0.5, 1.0, 1.0};
  EXPECT_EQ(bias_sweep({16}, in, sweet_spot_schedule).argmin_b, 16u);
  EXPECT_THROW(bias_sweep({}, in, sweet_spot_schedule), std::invalid_argument);
  in.sigma = 0.0;  // all biases zero: smallest b wins
  EXPECT_EQ(bias_sweep({8, 4, 16}, in, sweet_spot_schedule).argmin_b, 4u);
}

}  // namespace
}  // namespace mbclip
