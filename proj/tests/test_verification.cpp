#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mbclip/verification.hpp"

namespace mbclip {
namespace {

DraggerSpec fixed_spec(std::size_t d, double ratio) {
  std::vector<double> base(d, 0.0);
  base[1] = 1.0;
  return DraggerSpec{Vector(base), ratio, ratio, {}};
}

Vector unit_g(std::size_t d) { return Vector::unit(d, 0); }

TEST(StarValue, Examples) {
  const double s = star_value({1, 0, 0}, {0, 1, 0}, {0.5, 0, 0}, 0.5);
  // (0.5 + 0.5) / |(1, 0.5, 0)| + (0.5 - 0.5) / |(0, 0.5, 0)|
  EXPECT_NEAR(s, 1.0 / std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(s, 0.894427, 1e-6);

  const Vector g{0.3, -1.2, 0.4};
  const Vector mu{1.2, 0.3, 0.0};
  const double eps = 0.3;
  const Vector center = (1 - eps) * g + eps * mu;
  EXPECT_NEAR(star_value(g, mu, Vector::zeros(3), eps),
              2 * (1 - eps) * squared_norm(g) / l2_norm(center), 1e-15);

  const Vector delta{0.1, 0.2, 0.9};
  const double base = star_value(g, mu, delta, eps);
  EXPECT_NEAR(star_value(2.5 * g, 2.5 * mu, 2.5 * delta, eps), 2.5 * base, 1e-13);
  EXPECT_THROW(star_value({1, 0}, {0, 0}, {1, 0}, 0.0), std::invalid_argument);
}

TEST(StarTuples, AreAdmissible) {
  PhiloxStream rng(1, 2, 3);
  for (int i = 0; i < 2000; ++i) {
    const auto t = sample_star_tuple(5, rng);
    EXPECT_GT(dot(t.g, t.delta), 0.0);
    EXPECT_LE(std::abs(dot(t.mu, t.g)), 1e-12 * l2_norm(t.mu) * l2_norm(t.g));
    EXPECT_LE(std::abs(dot(t.mu, t.delta)), 1e-12 * l2_norm(t.mu) * l2_norm(t.delta));
    EXPECT_GT(t.epsilon, 0.0);
    EXPECT_LT(t.epsilon, 1.0);
  }
  EXPECT_THROW(sample_star_tuple(2, rng), std::invalid_argument);
}

TEST(McLemma2, PassesAndIsDeterministic) {
  const auto a = mc_lemma2(20000, 4, 11);
  EXPECT_TRUE(a.pass);
  EXPECT_GE(a.estimate, 0.0);
  const auto b = mc_lemma2(20000, 4, 11, McSettings{16, 4});
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_THROW(mc_lemma2(10, 2, 1), std::invalid_argument);
}

TEST(McLemma1, NoiselessIsZero) {
  const auto r = mc_lemma1(unit_g(4), {0.0, 0.0, 4}, fixed_spec(4, 2.0), 4, 100, 1);
  EXPECT_EQ(r.estimate, 0.0);
  EXPECT_EQ(r.bound_or_reference, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(McLemma1, SingleExampleMatchesGaussianNormMean) {
  const std::size_t d = 8;
  const auto r = mc_lemma1(unit_g(d), {0.0, 1.0, d}, fixed_spec(d, 2.0), 1, 1000000, 2);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.bound_or_reference, 1.0);
  // E|xi| = sqrt(2/d) Gamma((d+1)/2) / Gamma(d/2) for xi ~ N(0, I/d).
  const double exact = std::sqrt(2.0 / d) * std::tgamma((d + 1) / 2.0) / std::tgamma(d / 2.0);
  EXPECT_NEAR(r.estimate, exact, 2e-3);
  EXPECT_LT(r.estimate, 1.0);
}

TEST(McLemma1, HandBoundCase) {
  const std::size_t d = 8;
  const auto r = mc_lemma1(unit_g(d), {0.5, 1.0, d}, fixed_spec(d, 2.0), 4, 200000, 3);
  EXPECT_NEAR(r.bound_or_reference, 0.661438, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.estimate, r.bound_or_reference);
}

TEST(McLemma1, NegativeControlFails) {
  const std::size_t d = 8;
  const auto r = mc_lemma1(unit_g(d), {0.25, 1.0, d}, fixed_spec(d, 2.0), 16, 20000, 4, {},
                           Lemma1Options{0.5, 3.0});
  EXPECT_FALSE(r.pass);
}

TEST(McLemma1, RequiresFixedRatio) {
  DraggerSpec spec = fixed_spec(4, 1.0);
  spec.ratio_high = 2.0;
  EXPECT_THROW(mc_lemma1(unit_g(4), {0.3, 1.0, 4}, spec, 2, 10, 1), std::invalid_argument);
}

TEST(McVarianceIdentity, Examples) {
  const std::size_t d = 8;
  const auto zero = mc_variance_identity(unit_g(d), {0.0, 0.0, d}, fixed_spec(d, 2.0), 1000, 1);
  EXPECT_EQ(zero.estimate, 0.0);
  EXPECT_EQ(zero.bound_or_reference, 0.0);
  EXPECT_TRUE(zero.pass);

  const auto mid = mc_variance_identity(unit_g(d), {0.5, 1.0, d}, fixed_spec(d, 2.0), 1000000, 2);
  EXPECT_DOUBLE_EQ(mid.bound_or_reference, 1.75);
  EXPECT_TRUE(mid.pass) << mid.estimate;

  const auto pure = mc_variance_identity(unit_g(d), {1.0, 1.0, d}, fixed_spec(d, 2.0), 1000, 3);
  EXPECT_EQ(pure.bound_or_reference, 0.0);
  EXPECT_EQ(pure.estimate, 0.0);
  EXPECT_TRUE(pure.pass);

  DraggerSpec spec = fixed_spec(d, 1.0);
  spec.ratio_high = 3.0;
  try {
    mc_variance_identity(unit_g(d), {0.5, 1.0, d}, spec, 10, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("requires fixed dragger norm"), std::string::npos);
  }
}

TEST(McVarianceIdentity, ThreadCountDoesNotChangeReport) {
  const std::size_t d = 8;
  const auto a = mc_variance_identity(unit_g(d), {0.3, 0.5, d}, fixed_spec(d, 1.5), 50000, 9,
                                      McSettings{8, 1});
  const auto b = mc_variance_identity(unit_g(d), {0.3, 0.5, d}, fixed_spec(d, 1.5), 50000, 9,
                                      McSettings{8, 3});
  EXPECT_EQ(a.estimate, b.estimate);
}

TEST(CosineExperiment, NoiselessStructure) {
  const auto p = quadratic_problem(linear_spectrum(8, 0.5, 1.0));
  const Vector w = Vector::filled(8, 1.0);
  const auto r = cosine_experiment(p, {0.1, 0.0, 8}, fixed_spec(8, 2.0), w, 100, 1);
  EXPECT_EQ(r.benign_benign.mean, 1.0);
  EXPECT_EQ(r.benign_benign.stddev, 0.0);
  EXPECT_NEAR(r.dragger_benign.mean, 0.0, 1e-15);
}

TEST(CosineExperiment, NoisyOrdering) {
  const std::size_t d = 64;
  const auto p = quadratic_problem(linear_spectrum(d, 0.1, 1.0));
  const Vector w = Vector::filled(d, 1.0);
  const double sigma = 0.1 * l2_norm(p.grad(w));
  const auto r = cosine_experiment(p, {0.1, sigma, d}, fixed_spec(d, 2.0), w, 100, 2);
  EXPECT_LT(std::abs(r.dragger_benign.mean), r.benign_benign.mean);
  EXPECT_THROW(cosine_experiment(p, {0.1, sigma, d}, fixed_spec(d, 2.0), w, 1, 2),
               std::invalid_argument);
}

TEST(CHatProxy, Examples) {
  EXPECT_EQ(c_hat_proxy({2, 2, 2}, std::vector<double>{2, 2}, 0.0), 1.0);
  std::vector<double> benign;
  for (int i = 10; i >= 1; --i) benign.push_back(i);
  EXPECT_DOUBLE_EQ(c_hat_proxy(benign, std::vector<double>{1, 3}, 0.1), 2.5);
  EXPECT_THROW(c_hat_proxy({}, std::vector<double>{1}, 0.1), std::invalid_argument);
  EXPECT_THROW(c_hat_proxy({1}, std::vector<double>{0, 0}, 0.0), std::invalid_argument);
  EXPECT_THROW(c_hat_proxy({1}, std::vector<double>{1}, 1.0), std::invalid_argument);
}

TEST(CHatProxy, ScaleEquivariance) {
  const std::vector<double> benign{1.2, 0.7, 3.1, 2.2, 0.9, 1.4, 5.0};
  const std::vector<double> dragger{0.4, 0.6, 0.5};
  const double base = c_hat_proxy(benign, dragger, 0.2);
  std::vector<double> b3 = benign;
  for (auto& x : b3) x *= 3.0;
  std::vector<double> d3 = dragger;
  for (auto& x : d3) x *= 3.0;
  EXPECT_NEAR(c_hat_proxy(b3, dragger, 0.2), 3.0 * base, 1e-14);
  EXPECT_NEAR(c_hat_proxy(benign, d3, 0.2), base / 3.0, 1e-14);
}

}  // namespace
}  // namespace mbclip
