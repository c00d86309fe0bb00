#pragma once

// Closed-form convergence rates and constants for SGD with and without
// micro-batch clipping under the benign/dragger gradient model.
//
// Symbols: T iterations, L smoothness, loss_gap = L_0 - L_*, sigma benign
// noise, B mini-batch, b micro-batch, epsilon dragger probability,
// c <= |mu|/|g| <= C dragger norm band.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mbclip {

/// A theorem's hypothesis does not hold for the requested inputs.
class HypothesisError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct RateInputs {
  std::size_t T = 1;
  double L = 1.0;
  double loss_gap = 0.0;
  double sigma = 0.0;
  std::size_t B = 1;
  std::size_t b = 1;
  double epsilon = 0.0;
  double c = 1.0;
  double C = 1.0;
};

struct Thm2Rate {
  double bias;      // T-independent
  double decaying;  // O(1/sqrt(T))
  double total;
};

namespace detail {
inline void require_T_L(std::size_t T, double L) {
  if (T == 0) throw std::invalid_argument("T must be positive");
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
}
}  // namespace detail

/// Baseline without draggers: T^{-1/4} sqrt(2 L gap + sigma_b^2 / B).
inline double thm9_rate(std::size_t T, double L, double loss_gap, double sigma_b,
                        std::size_t B) {
  detail::require_T_L(T, L);
  if (B == 0) throw std::invalid_argument("B must be positive");
  const double inner = 2.0 * L * loss_gap + sigma_b * sigma_b / static_cast<double>(B);
  return std::sqrt(inner) / std::pow(static_cast<double>(T), 0.25);
}

/// Plain SGD with draggers:
/// T^{-1/4} sqrt(4L/(1-eps)^2 gap + 2 sigma^2 / ((1-eps) B)).
inline double thm1_rate(std::size_t T, double L, double loss_gap, double sigma,
                        std::size_t B, double epsilon) {
  detail::require_T_L(T, L);
  if (B == 0) throw std::invalid_argument("B must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw HypothesisError("SGD rate needs 0 <= epsilon < 1");
  }
  const double keep = 1.0 - epsilon;
  const double inner = 4.0 * L / (keep * keep) * loss_gap +
                       2.0 * sigma * sigma / (keep * static_cast<double>(B));
  return std::sqrt(inner) / std::pow(static_cast<double>(T), 0.25);
}

/// Throws HypothesisError unless epsilon >= 1/(b+1) and
/// sqrt(b eps) > sqrt(1 - eps), with 0 < eps < 1.
inline void check_thm2_hypotheses(std::size_t b, double epsilon) {
  if (b == 0) throw std::invalid_argument("b must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw HypothesisError("clipped rate needs 0 < epsilon < 1");
  }
  const double bd = static_cast<double>(b);
  if (epsilon < 1.0 / (bd + 1.0)) {
    throw HypothesisError("epsilon >= 1/(b+1) violated (b=" + std::to_string(b) +
                          ", epsilon=" + std::to_string(epsilon) + ")");
  }
  if (!(std::sqrt(bd * epsilon) > std::sqrt(1.0 - epsilon))) {
    throw HypothesisError("sqrt(b*epsilon) > sqrt(1-epsilon) violated (b=" +
                          std::to_string(b) + ")");
  }
}

/// sigma / ((sqrt(b) eps - sqrt(eps(1-eps))) (1 + c)).
inline double thm2_bias(std::size_t b, double epsilon, double sigma, double c) {
  check_thm2_hypotheses(b, epsilon);
  const double denom =
      (std::sqrt(static_cast<double>(b)) * epsilon - std::sqrt(epsilon * (1.0 - epsilon))) *
      (1.0 + c);
  return sigma / denom;
}

inline Thm2Rate thm2_rate(const RateInputs& in) {
  detail::require_T_L(in.T, in.L);
  check_thm2_hypotheses(in.b, in.epsilon);
  const double eps = in.epsilon;
  const double bias = thm2_bias(in.b, eps, in.sigma, in.c);
  const double sbe = std::sqrt(static_cast<double>(in.b) * eps);
  const double decaying = (1.0 / std::sqrt(static_cast<double>(in.T))) *
                          (sbe / (sbe - std::sqrt(1.0 - eps))) *
                          (2.0 * in.L * (1.0 + 2.0 * eps * in.C) / (1.0 - eps)) *
                          (in.loss_gap + 1.0 / (2.0 * in.L));
  return {bias, decaying, bias + decaying};
}

/// Largest admissible dragger ratio picked in the SGD analysis:
/// sqrt((2(1-eps) eta - (1-eps^2) L eta^2) / (2 eps^2 L eta^2)).
inline double thm1_Cmax(double epsilon, double eta, double L) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw HypothesisError("dragger bound needs 0 < epsilon < 1");
  }
  if (!(eta > 0.0) || !(L > 0.0)) throw std::invalid_argument("eta and L must be positive");
  const double radicand = 2.0 * (1.0 - epsilon) * eta - (1.0 - epsilon * epsilon) * L * eta * eta;
  if (!(radicand > 0.0)) {
    throw HypothesisError("step size too large for dragger bound");
  }
  return std::sqrt(radicand / (2.0 * epsilon * epsilon * L * eta * eta));
}

/// Upper bound on E|Delta| for a micro-batch of b.
inline double lemma1_bound(std::size_t b, double epsilon, double sigma, double g_norm,
                           double mu_norm) {
  if (b == 0) throw std::invalid_argument("b must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  const double mix = epsilon * (1.0 - epsilon);
  const double var = mix * g_norm * g_norm + mix * mu_norm * mu_norm +
                     (1.0 - epsilon) * sigma * sigma;
  return std::sqrt(var / static_cast<double>(b));
}

struct BiasSweep {
  std::vector<std::pair<std::size_t, double>> points;  // (b, bias)
  std::size_t argmin_b;
};

/// Bias term over a grid of micro-batch sizes with c replaced by c(b).
/// Ties go to the smaller b.
inline BiasSweep bias_sweep(const std::vector<std::size_t>& b_grid, const RateInputs& in,
                            const std::function<double(std::size_t)>& c_schedule) {
  if (b_grid.empty()) throw std::invalid_argument("empty micro-batch grid");
  BiasSweep out{{}, 0};
  double best = 0.0;
  for (std::size_t b : b_grid) {
    const double bias = thm2_bias(b, in.epsilon, in.sigma, c_schedule(b));
    out.points.emplace_back(b, bias);
    if (out.points.size() == 1 || bias < best || (bias == best && b < out.argmin_b)) {
      best = bias;
      out.argmin_b = b;
    }
  }
  return out;
}

/// A decaying ratio schedule c(b) = 100 / b. With epsilon = 0.5 its bias
/// curve over b in 2..64 has an interior minimum (at b = 4).
inline double sweet_spot_schedule(std::size_t b) { return 100.0 / static_cast<double>(b); }

}  // namespace mbclip
