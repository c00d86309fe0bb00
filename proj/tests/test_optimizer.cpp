#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mbclip/optimizer.hpp"

namespace mbclip {
namespace {

struct Fixture {
  Problem problem = quadratic_problem(linear_spectrum(8, 0.1, 1.0));
  GradientModelParams params{0.2, 0.5, 8};
  DraggerSpec spec{Vector{1, -1, 1, -1, 1, -1, 1, -1}, 1.0, 3.0, {}};
  RunConfig cfg{200, ClipSpec{16, 4, AdaptiveMode{}}, FixedLr{0.05}, 17, Vector::filled(8, 1.0)};
};

TEST(LrTheorem, Examples) {
  EXPECT_EQ(lr_theorem(1.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(lr_theorem(1.0, 10000), 0.01);
  EXPECT_EQ(lr_theorem(2.0, 4), 0.25);
  EXPECT_THROW(lr_theorem(0.0, 4), std::invalid_argument);
}

TEST(RunSgd, NoiselessQuadraticFollowsGeometricDecay) {
  const auto p = quadratic_problem({1.0});
  const double eta = 0.1;
  const RunConfig cfg{50, ClipSpec{4, 4, AdaptiveMode{}}, FixedLr{eta}, 1, Vector{3.0}};
  std::vector<double> ws;
  const auto s = run_sgd(p, {0.0, 0.0, 1}, {Vector{1.0}, 1, 1, {}}, cfg,
                         [&](const StepView& v) { ws.push_back(v.w[0]); });
  ASSERT_EQ(ws.size(), 50u);
  for (std::size_t t = 0; t < ws.size(); ++t) {
    EXPECT_NEAR(ws[t], std::pow(1 - eta, t) * 3.0, 1e-14 * 3.0) << t;
  }
  EXPECT_NEAR(s.final_w[0], std::pow(1 - eta, 50) * 3.0, 1e-14);
}

TEST(RunSgd, IterationBounds) {
  Fixture s;
  s.cfg.iterations = 0;
  EXPECT_THROW(run_sgd(s.problem, s.params, s.spec, s.cfg), std::invalid_argument);
  s.cfg.iterations = 1;
  const auto out = run_sgd(s.problem, s.params, s.spec, s.cfg);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].t, 0u);
}

TEST(RunSgd, NoiselessIsFullBatchGradientDescent) {
  const auto p = logistic_problem(synthetic_logistic_data(60, 3, 5), 0.05);
  const double eta = 0.5;
  const RunConfig cfg{30, ClipSpec{8, 8, AdaptiveMode{}}, FixedLr{eta}, 9, Vector{0.5, -0.5, 1}};
  const auto out = run_sgd(p, {0.0, 0.0, 3}, {Vector{1, 0, 0}, 1, 1, {}}, cfg);
  Vector w{0.5, -0.5, 1};
  for (int t = 0; t < 30; ++t) {
    EXPECT_NEAR(out.records[t].loss, p.loss(w), 1e-14);
    w.add_scaled(-eta, p.grad(w));
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.final_w[i], w[i], 1e-13);
}

TEST(RunSgd, DeterministicAndSeedSensitive) {
  Fixture s;
  const auto a = run_sgd(s.problem, s.params, s.spec, s.cfg);
  const auto b = run_sgd(s.problem, s.params, s.spec, s.cfg);
  EXPECT_EQ(a.final_w, b.final_w);
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].loss, b.records[t].loss);
    EXPECT_EQ(a.records[t].dragger_count, b.records[t].dragger_count);
  }
  s.cfg.seed += 1;
  EXPECT_NE(run_sgd(s.problem, s.params, s.spec, s.cfg).final_w, a.final_w);
}

TEST(RunSgd, DraggerBookkeeping) {
  Fixture s;
  s.cfg.iterations = 2000;
  s.cfg.batch.mini_batch = 32;
  const auto out = run_sgd(s.problem, s.params, s.spec, s.cfg);
  double total = 0.0;
  for (const auto& r : out.records) {
    EXPECT_LE(r.dragger_count, 32u);
    total += static_cast<double>(r.dragger_count);
  }
  const double n = 2000.0 * 32.0;
  const double eps = s.params.epsilon;
  EXPECT_NEAR(total / n, eps, 4.0 * std::sqrt(eps * (1 - eps) / n));
}

TEST(RunSgd, DivergenceIsReported) {
  Fixture s;
  s.cfg.lr = FixedLr{5.0};
  s.params.epsilon = 0.0;
  try {
    run_sgd(s.problem, s.params, s.spec, s.cfg);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.iteration(), 0u);
    EXPECT_NE(std::string(e.what()).find("divergence detected at iteration"), std::string::npos);
  }
}

TEST(RunMcsgd, FullMicroBatchMatchesSgdBitForBit) {
  Fixture s;
  s.cfg.batch = ClipSpec{16, 16, AdaptiveMode{}};
  const auto sgd = run_sgd(s.problem, s.params, s.spec, s.cfg);
  const auto clipped = run_mcsgd(s.problem, s.params, s.spec, s.cfg);
  ASSERT_EQ(sgd.records.size(), clipped.records.size());
  for (std::size_t t = 0; t < sgd.records.size(); ++t) {
    ASSERT_EQ(sgd.records[t].loss, clipped.records[t].loss) << t;
    ASSERT_EQ(sgd.records[t].true_grad_norm, clipped.records[t].true_grad_norm) << t;
  }
  EXPECT_EQ(sgd.final_w, clipped.final_w);
}

TEST(RunMcsgd, NormalizedStepsAreAtMostEta) {
  const auto p = quadratic_problem({0.5, 1.0});
  const double eta = 0.01;
  const RunConfig cfg{300, ClipSpec{8, 2, NormalizedMode{}}, FixedLr{eta}, 3, Vector{2, -1}};
  std::size_t steps = 0;
  run_mcsgd(p, {0.25, 0.3, 2}, {Vector{1, 1}, 1, 2, {}}, cfg, [&](const StepView& v) {
    const Vector expected = aggregate_normalized(v.micro_grads, 2, 8);
    EXPECT_EQ(v.update, expected);
    EXPECT_LE(eta * l2_norm(v.update), eta * (1 + 1e-12));
    ++steps;
  });
  EXPECT_EQ(steps, 300u);
}

TEST(RunMcsgd, AdaptiveAndNormalizedDirectionsAgree) {
  Fixture s;
  std::size_t checked = 0;
  const auto out = run_mcsgd(s.problem, s.params, s.spec, s.cfg, [&](const StepView& v) {
    const Vector normalized = aggregate_normalized(v.micro_grads, 4, 16);
    EXPECT_NEAR(cosine_similarity(v.update, normalized), 1.0, 1e-10);
    ++checked;
  });
  EXPECT_EQ(checked, s.cfg.iterations);
  for (const auto& r : out.records) {
    ASSERT_TRUE(r.clip_bound.has_value());
    EXPECT_FALSE(r.zero_rho_event);
  }
}

TEST(RunMcsgd, RhoNeverExceedsLargestMicroGradient) {
  Fixture s;
  std::vector<double> largest;
  const auto out = run_mcsgd(s.problem, s.params, s.spec, s.cfg, [&](const StepView& v) {
    double m = 0.0;
    for (const auto& g : v.micro_grads) m = std::max(m, l2_norm(g));
    largest.push_back(m);
  });
  for (std::size_t t = 0; t < out.records.size(); ++t) {
    EXPECT_LE(*out.records[t].clip_bound, largest[t]);
  }
}

TEST(RunMcsgd, StationaryStartIsRecordedNotFatal) {
  Fixture s;
  s.params.sigma = 0.0;
  s.cfg.initial_w = Vector::zeros(8);
  s.cfg.iterations = 5;
  const auto out = run_mcsgd(s.problem, s.params, s.spec, s.cfg);
  for (const auto& r : out.records) {
    EXPECT_TRUE(r.zero_rho_event);
    EXPECT_EQ(*r.clip_bound, 0.0);
  }
  bool any_stationary = false;
  for (const auto& r : out.records) any_stationary = any_stationary || r.stationary_dragger;
  EXPECT_TRUE(any_stationary);
  EXPECT_TRUE(out.final_w.is_zero());

  s.cfg.batch.mode = NormalizedMode{};
  EXPECT_THROW(run_mcsgd(s.problem, s.params, s.spec, s.cfg), std::invalid_argument);
}

TEST(RunMcsgd, RejectsIndivisibleBatch) {
  Fixture s;
  s.cfg.batch = ClipSpec{16, 5, AdaptiveMode{}};
  EXPECT_THROW(run_mcsgd(s.problem, s.params, s.spec, s.cfg), std::invalid_argument);
}

TEST(MinGradNorm, Examples) {
  auto summary = [](std::vector<double> norms) {
    RunSummary s{0, 0, Vector{0.0}, 0.1, {}};
    for (std::size_t t = 0; t < norms.size(); ++t) {
      s.records.push_back({t, 0.0, norms[t], std::nullopt, 0});
    }
    return s;
  };
  EXPECT_EQ(min_grad_norm(summary({3})), 3.0);
  EXPECT_EQ(min_grad_norm(summary({5, 4, 2, 1.5})), 1.5);
  EXPECT_EQ(min_grad_norm(summary({2, 1, 5})), 1.0);
  EXPECT_THROW(min_grad_norm(summary({})), std::invalid_argument);

  Fixture s;
  const auto out = run_sgd(s.problem, s.params, s.spec, s.cfg);
  EXPECT_EQ(out.min_grad_norm, min_grad_norm(out));
}

}  // namespace
}  // namespace mbclip
