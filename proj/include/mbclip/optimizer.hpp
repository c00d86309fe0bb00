#pragma once

// Plain mini-batch SGD and micro-batch clipped SGD driven by the synthetic
// gradient model. Per-example draw i of iteration t always comes from
// substream (seed, t, i), so a run is a pure function of its inputs.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mbclip/clipping.hpp"
#include "mbclip/gradient_model.hpp"
#include "mbclip/linalg.hpp"
#include "mbclip/problems.hpp"
#include "mbclip/random.hpp"

namespace mbclip {

/// Below this true-gradient norm the dragger is the zero vector.
inline constexpr double kStationaryGradNorm = 1e-14;
/// Loss above this aborts the run as divergent.
inline constexpr double kDivergenceLoss = 1e12;

struct TheoremLr {};
struct FixedLr {
  double eta;
};
using LrRule = std::variant<TheoremLr, FixedLr>;

/// eta = 1 / (L sqrt(T)).
inline double lr_theorem(double L, std::size_t T) {
  if (!(L > 0.0)) throw std::invalid_argument("smoothness constant must be positive");
  if (T == 0) throw std::invalid_argument("iteration count must be positive");
  return 1.0 / (L * std::sqrt(static_cast<double>(T)));
}

struct RunConfig {
  std::size_t iterations = 1;  // T
  ClipSpec batch;              // plain SGD reads only batch.mini_batch
  LrRule lr = TheoremLr{};
  std::uint64_t seed = 0;
  Vector initial_w = Vector::zeros(1);

  double learning_rate(double L) const {
    if (const auto* f = std::get_if<FixedLr>(&lr)) {
      if (!(f->eta > 0.0)) throw std::invalid_argument("learning rate must be positive");
      return f->eta;
    }
    return lr_theorem(L, iterations);
  }
};

struct IterationRecord {
  std::size_t t;
  double loss;
  double true_grad_norm;
  std::optional<double> clip_bound;
  std::size_t dragger_count;
  bool zero_rho_event = false;
  bool stationary_dragger = false;  // draggers zeroed because |g_t| ~ 0
};

struct RunSummary {
  double min_grad_norm;
  double final_loss;
  Vector final_w;
  double learning_rate;
  std::vector<IterationRecord> records;
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(std::size_t iteration)
      : std::runtime_error("divergence detected at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// What one step saw, for callers that want to inspect updates.
struct StepView {
  std::size_t t;
  const Vector& w;
  const Vector& true_grad;
  std::span<const Vector> micro_grads;  // empty for plain SGD
  const Vector& update;                 // w_{t+1} = w_t - eta * update
};

using StepObserver = std::function<void(const StepView&)>;

inline double min_grad_norm(const RunSummary& s) {
  if (s.records.empty()) throw std::invalid_argument("run has no records");
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : s.records) m = std::min(m, r.true_grad_norm);
  return m;
}

namespace detail {

struct Draws {
  std::vector<Vector> grads;
  std::size_t draggers = 0;
  bool stationary = false;
};

inline Draws draw_mini_batch(const Vector& g, const GradientModelParams& params,
                             const DraggerSpec& spec, std::uint64_t seed, std::size_t t,
                             std::size_t B) {
  Draws out;
  out.grads.reserve(B);
  const bool stationary = l2_norm(g) < kStationaryGradNorm;
  for (std::size_t i = 0; i < B; ++i) {
    PhiloxStream rng(seed, t, static_cast<std::uint32_t>(i));
    if (stationary) {
      // Same first draw decides the kind; the dragger collapses to zero.
      if (uniform01(rng) < params.epsilon) {
        out.grads.push_back(Vector::zeros(g.dim()));
        ++out.draggers;
        out.stationary = true;
      } else {
        out.grads.push_back(sample_benign(g, params.sigma, rng));
      }
      continue;
    }
    auto lg = sample_per_example(g, params, spec, rng);
    if (lg.kind == GradientKind::dragger) ++out.draggers;
    out.grads.push_back(std::move(lg.value));
  }
  return out;
}

template <class StepFn>
RunSummary run_loop(const Problem& p, const GradientModelParams& params,
                    const DraggerSpec& spec, const RunConfig& cfg, StepFn&& step) {
  params.validate();
  spec.validate();
  if (cfg.iterations == 0) throw std::invalid_argument("iteration count must be positive");
  if (cfg.batch.mini_batch == 0) throw std::invalid_argument("batch size must be positive");
  if (params.dim != p.dim() || cfg.initial_w.dim() != p.dim() ||
      spec.base_direction.dim() != p.dim()) {
    throw std::invalid_argument("problem, model and initial point dimensions differ");
  }
  const double eta = cfg.learning_rate(p.smoothness_L());

  std::vector<IterationRecord> records;
  records.reserve(cfg.iterations);
  Vector w = cfg.initial_w;
  double min_norm = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    try {
      const double loss = p.loss(w);
      if (!std::isfinite(loss) || loss > kDivergenceLoss) throw DivergenceError(t);
      const Vector g = p.grad(w);
      const double gn = l2_norm(g);
      Draws draws = draw_mini_batch(g, params, spec, cfg.seed, t, cfg.batch.mini_batch);
      IterationRecord rec{t, loss, gn, std::nullopt, draws.draggers, false, draws.stationary};
      w.add_scaled(-eta, step(t, w, g, draws.grads, rec));
      records.push_back(rec);
      min_norm = std::min(min_norm, gn);
    } catch (const std::domain_error&) {
      throw DivergenceError(t);
    }
  }
  double final_loss = 0.0;
  try {
    final_loss = p.loss(w);
  } catch (const std::domain_error&) {
    throw DivergenceError(cfg.iterations);
  }
  if (!std::isfinite(final_loss) || final_loss > kDivergenceLoss) {
    throw DivergenceError(cfg.iterations);
  }
  return {min_norm, final_loss, std::move(w), eta, std::move(records)};
}

}  // namespace detail

/// w_{t+1} = w_t - (eta/B) sum_i g_{t,i}.
inline RunSummary run_sgd(const Problem& p, const GradientModelParams& params,
                          const DraggerSpec& spec, const RunConfig& cfg,
                          const StepObserver& observer = {}) {
  return detail::run_loop(
      p, params, spec, cfg,
      [&](std::size_t t, const Vector& w, const Vector& g, const std::vector<Vector>& grads,
          IterationRecord&) {
        Vector update = microbatch_mean(grads);
        if (observer) observer(StepView{t, w, g, {}, update});
        return update;
      });
}

/// Micro-batch clipped SGD; the aggregation follows cfg.batch.mode.
inline RunSummary run_mcsgd(const Problem& p, const GradientModelParams& params,
                            const DraggerSpec& spec, const RunConfig& cfg,
                            const StepObserver& observer = {}) {
  cfg.batch.validate();
  return detail::run_loop(
      p, params, spec, cfg,
      [&](std::size_t t, const Vector& w, const Vector& g, const std::vector<Vector>& grads,
          IterationRecord& rec) {
        std::vector<Vector> micro;
        micro.reserve(cfg.batch.num_micro_batches());
        for (auto mb : shard(grads, cfg.batch.micro_batch)) micro.push_back(microbatch_mean(mb));
        Aggregate agg = aggregate(micro, cfg.batch);
        rec.clip_bound = agg.rho;
        rec.zero_rho_event = agg.zero_rho;
        if (observer) observer(StepView{t, w, g, micro, agg.gradient});
        return std::move(agg.gradient);
      });
}

}  // namespace mbclip
