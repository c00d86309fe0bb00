#pragma once

// Synthetic per-example gradients: with probability 1-epsilon a benign
// sample g + xi (xi isotropic Gaussian with E|xi|^2 = sigma^2), with
// probability epsilon a "dragger" mu orthogonal to g whose norm is a
// ratio in [ratio_low, ratio_high] of |g|.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mbclip/linalg.hpp"
#include "mbclip/random.hpp"

namespace mbclip {

struct GradientModelParams {
  double epsilon = 0.0;  // dragger probability
  double sigma = 0.0;    // benign noise scale, E|xi|^2 = sigma^2
  std::size_t dim = 1;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw std::invalid_argument("epsilon must lie in [0, 1]");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("sigma must be non-negative");
    }
    if (dim == 0) throw std::invalid_argument("dim must be positive");
  }
};

/// Maps a micro-batch size b to a dragger norm ratio c(b) by linear
/// interpolation in log(b) between calibration points. Outside the
/// calibrated range the nearest endpoint value is held.
class RatioSchedule {
 public:
  explicit RatioSchedule(std::vector<std::pair<double, double>> points)
      : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("ratio schedule needs points");
    std::sort(points_.begin(), points_.end());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto [b, c] = points_[i];
      if (!(b >= 1.0) || !(c > 0.0)) {
        throw std::invalid_argument("ratio schedule points need b >= 1 and c > 0");
      }
      if (i > 0 && points_[i - 1].first == b) {
        throw std::invalid_argument("ratio schedule has duplicate micro-batch size");
      }
    }
  }

  /// Reciprocals of the measured benign/dragger norm proxies at
  /// b = 1, 4, 512 (6.18, 5.74, 4.42). Illustrative calibration only.
  static RatioSchedule measured_proxy_reciprocal() {
    return RatioSchedule({{1.0, 1.0 / 6.18}, {4.0, 1.0 / 5.74}, {512.0, 1.0 / 4.42}});
  }

  double operator()(double b) const {
    if (b <= points_.front().first) return points_.front().second;
    if (b >= points_.back().first) return points_.back().second;
    const auto hi = std::upper_bound(
        points_.begin(), points_.end(), b,
        [](double x, const std::pair<double, double>& p) { return x < p.first; });
    const auto lo = hi - 1;
    const double s = (std::log(b) - std::log(lo->first)) /
                     (std::log(hi->first) - std::log(lo->first));
    return lo->second + s * (hi->second - lo->second);
  }

  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

struct DraggerSpec {
  Vector base_direction;
  double ratio_low;   // c
  double ratio_high;  // C
  std::function<double(double)> ratio_schedule;  // optional b -> c(b)

  void validate() const {
    if (!(ratio_low > 0.0) || !(ratio_low <= ratio_high) || !std::isfinite(ratio_high)) {
      throw std::invalid_argument("dragger ratios need 0 < ratio_low <= ratio_high");
    }
    if (base_direction.is_zero()) {
      throw std::invalid_argument("dragger base direction must be nonzero");
    }
  }

  /// Lower ratio c used for micro-batch size b: the schedule when present.
  double ratio_low_at(double b) const {
    return ratio_schedule ? ratio_schedule(b) : ratio_low;
  }
};

enum class GradientKind { benign, dragger };

struct LabeledGradient {
  Vector value;
  GradientKind kind;
};

template <class Urbg>
Vector sample_benign(const Vector& g, double sigma, Urbg& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  if (sigma == 0.0) return g;
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(g.dim())));
  std::vector<double> out(g.begin(), g.end());
  for (double& x : out) x += normal(rng);
  return Vector(std::move(out));
}

/// Unit direction of the dragger for true gradient g.
inline Vector dragger_direction(const Vector& g, const Vector& base) {
  if (g.dim() < 2) {
    throw std::invalid_argument("dragger needs dim >= 2");
  }
  const Vector dir = project_orthogonal(base, g);
  const double n = l2_norm(dir);
  if (n <= kRelTol * l2_norm(base)) {
    throw std::invalid_argument("degenerate dragger direction");
  }
  return (1.0 / n) * dir;
}

template <class Urbg>
Vector make_dragger(const Vector& g, const DraggerSpec& spec, Urbg& rng) {
  const double gn = l2_norm(g);
  if (gn == 0.0) throw std::invalid_argument("dragger needs a nonzero gradient");
  const Vector dir = dragger_direction(g, spec.base_direction);
  double ratio = spec.ratio_low;
  if (spec.ratio_high > spec.ratio_low) {
    ratio = spec.ratio_low + (spec.ratio_high - spec.ratio_low) * uniform01(rng);
  }
  return (ratio * gn) * dir;
}

/// One per-example gradient. The kind is decided by the first draw of the
/// stream so benign and dragger branches consume randomness consistently.
template <class Urbg>
LabeledGradient sample_per_example(const Vector& g, const GradientModelParams& params,
                                   const DraggerSpec& spec, Urbg& rng) {
  const double u = uniform01(rng);
  if (u < params.epsilon) {
    return {make_dragger(g, spec, rng), GradientKind::dragger};
  }
  return {sample_benign(g, params.sigma, rng), GradientKind::benign};
}

/// Variance of one per-example gradient about its mean when |mu| is fixed:
/// eps(1-eps)|g|^2 + eps(1-eps)|mu|^2 + (1-eps) sigma^2.
inline double per_example_variance(double g_norm, double mu_norm, double epsilon,
                                   double sigma) {
  const double mix = epsilon * (1.0 - epsilon);
  return mix * g_norm * g_norm + mix * mu_norm * mu_norm + (1.0 - epsilon) * sigma * sigma;
}

}  // namespace mbclip
