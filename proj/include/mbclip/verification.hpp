#pragma once

// Monte-Carlo and analytic checks of the lemmas behind the clipped-SGD
// rate: the two-sided "star" quantity is non-negative, the micro-batch
// deviation obeys its norm bound, and the per-example variance formula is
// exact under the isotropic noise model.
//
// Each suite splits its n samples into a fixed number of partitions with
// their own substreams and reduces partial results in partition order, so
// reports depend only on (n, seed, partitions), never on thread count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mbclip/bounds.hpp"
#include "mbclip/clipping.hpp"
#include "mbclip/gradient_model.hpp"
#include "mbclip/linalg.hpp"
#include "mbclip/problems.hpp"
#include "mbclip/random.hpp"

namespace mbclip {

struct McReport {
  std::string name;
  std::size_t n_samples = 0;
  double estimate = 0.0;
  double bound_or_reference = 0.0;
  double margin = 0.0;
  bool pass = false;
  std::uint64_t seed = 0;
};

struct McSettings {
  std::size_t partitions = 16;
  std::size_t jobs = 1;
};

/// Stream ids keep suites sharing a seed on disjoint substreams.
enum class SuiteStream : std::uint64_t {
  lemma2 = 0x4c32,
  lemma1 = 0x4c31,
  variance = 0x5641,
  cosine = 0x4353,
};

namespace detail {

/// Runs fn(partition, begin, count) for each partition on up to `jobs`
/// threads and returns the partial results in partition order.
template <class Partial, class Fn>
std::vector<Partial> run_partitioned(std::size_t n, const McSettings& mc, Fn fn) {
  const std::size_t parts = std::max<std::size_t>(1, std::min(mc.partitions, std::max<std::size_t>(n, 1)));
  std::vector<Partial> out(parts);
  auto work = [&](std::size_t k) {
    const std::size_t begin = n * k / parts;
    const std::size_t end = n * (k + 1) / parts;
    out[k] = fn(k, begin, end - begin);
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(mc.jobs, parts));
  if (jobs == 1) {
    for (std::size_t k = 0; k < parts; ++k) work(k);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      for (std::size_t k = j; k < parts; k += jobs) work(k);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

inline PhiloxStream suite_stream(std::uint64_t seed, SuiteStream suite, std::size_t partition) {
  return PhiloxStream(seed, static_cast<std::uint64_t>(suite),
                      static_cast<std::uint32_t>(partition));
}

template <class Urbg>
Vector gaussian_vector(std::size_t dim, Urbg& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return Vector(std::move(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The star quantity and its non-negativity check

struct StarTuple {
  Vector g;
  Vector mu;
  Vector delta;
  double epsilon;
};

/// ((1-e)|g|^2 + g.D) / |(1-e)g + e mu + D| + ((1-e)|g|^2 - g.D) / |(1-e)g + e mu - D|
inline double star_value(const Vector& g, const Vector& mu, const Vector& delta,
                         double epsilon) {
  const double gg = squared_norm(g);
  const double gd = dot(g, delta);
  Vector center = (1.0 - epsilon) * g;
  center.add_scaled(epsilon, mu);
  const double den_plus = l2_norm(center + delta);
  const double den_minus = l2_norm(center - delta);
  if (den_plus == 0.0 || den_minus == 0.0) {
    throw std::invalid_argument("star quantity has a zero denominator");
  }
  const double a = (1.0 - epsilon) * gg;
  return (a + gd) / den_plus + (a - gd) / den_minus;
}

inline double star_value(const StarTuple& s) { return star_value(s.g, s.mu, s.delta, s.epsilon); }

/// A random admissible tuple: g != 0, g.Delta > 0, mu orthogonal to both g
/// and Delta with |mu| / |g| uniform in [0.1, 10], epsilon uniform in (0, 1).
/// |Delta| / |g| is log-uniform over [e^-3, e^3] to cover both branches of
/// the proof. Needs dim >= 3.
template <class Urbg>
StarTuple sample_star_tuple(std::size_t dim, Urbg& rng) {
  if (dim < 3) throw std::invalid_argument("star tuples need dim >= 3");
  for (;;) {
    const Vector g = detail::gaussian_vector(dim, rng);
    const double gn = l2_norm(g);
    Vector delta = detail::gaussian_vector(dim, rng);
    double gd = dot(g, delta);
    if (gn == 0.0 || gd == 0.0) continue;  // resample, never evaluate
    if (gd < 0.0) delta *= -1.0;
    const double delta_scale = std::exp(-3.0 + 6.0 * uniform01(rng)) * gn / l2_norm(delta);
    delta *= delta_scale;

    // mu: Gram-Schmidt against span{g, delta}.
    Vector raw = detail::gaussian_vector(dim, rng);
    const Vector e1 = (1.0 / gn) * g;
    Vector e2 = project_orthogonal(delta, e1);
    const double e2n = l2_norm(e2);
    if (e2n <= kRelTol * l2_norm(delta)) continue;
    e2 *= 1.0 / e2n;
    raw.add_scaled(-dot(raw, e1), e1);
    raw.add_scaled(-dot(raw, e2), e2);
    raw.add_scaled(-dot(raw, e1), e1);
    raw.add_scaled(-dot(raw, e2), e2);
    const double rn = l2_norm(raw);
    if (rn == 0.0) continue;
    const double ratio = 0.1 + 9.9 * uniform01(rng);
    Vector mu = (ratio * gn / rn) * raw;

    double eps = uniform01(rng);
    if (eps == 0.0) continue;
    return {g, std::move(mu), std::move(delta), eps};
  }
}

/// estimate = min star over n tuples; pass iff min >= floor.
inline McReport mc_lemma2(std::size_t n, std::size_t dim, std::uint64_t seed,
                          const McSettings& mc = {}, double floor = -1e-12) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (dim < 3) throw std::invalid_argument("star check needs dim >= 3");
  auto parts = detail::run_partitioned<double>(n, mc, [&](std::size_t k, std::size_t, std::size_t count) {
    auto rng = detail::suite_stream(seed, SuiteStream::lemma2, k);
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < count; ++i) m = std::min(m, star_value(sample_star_tuple(dim, rng)));
    return m;
  });
  const double est = *std::min_element(parts.begin(), parts.end());
  return {"lemma2_star_d" + std::to_string(dim), n, est, floor, est - floor, est >= floor, seed};
}

// ---------------------------------------------------------------------------
// Micro-batch deviation bound and the per-example variance identity

namespace detail {

inline void require_fixed_ratio(const DraggerSpec& spec, const char* what) {
  if (spec.ratio_low != spec.ratio_high) {
    throw std::invalid_argument(std::string(what) + " requires fixed dragger norm (c == C)");
  }
}

/// (1-eps) g + eps mu, and mu, for a fixed-ratio dragger.
inline std::pair<Vector, Vector> model_mean(const Vector& g, double epsilon,
                                            const DraggerSpec& spec) {
  PhiloxStream unused(0, 0, 0);
  Vector mu = make_dragger(g, spec, unused);
  Vector mean = (1.0 - epsilon) * g;
  mean.add_scaled(epsilon, mu);
  return {std::move(mean), std::move(mu)};
}

}  // namespace detail

struct Lemma1Options {
  double bound_multiplier = 1.0;  // test hook: < 1 turns the check into a negative control
  double stderr_slack = 3.0;
};

/// Samples n micro-batches of size b; estimate = mean |Delta| where
/// Delta = micro-batch mean - ((1-eps) g + eps mu).
inline McReport mc_lemma1(const Vector& g, const GradientModelParams& params,
                          const DraggerSpec& spec, std::size_t b, std::size_t n,
                          std::uint64_t seed, const McSettings& mc = {},
                          const Lemma1Options& opt = {}) {
  params.validate();
  spec.validate();
  detail::require_fixed_ratio(spec, "deviation bound check");
  if (b == 0 || n == 0) throw std::invalid_argument("b and n must be positive");
  const auto model = detail::model_mean(g, params.epsilon, spec);
  const Vector& center = model.first;
  const Vector& mu = model.second;

  struct Partial {
    double sum = 0.0;
    double sum_sq = 0.0;
  };
  auto parts = detail::run_partitioned<Partial>(n, mc, [&](std::size_t k, std::size_t, std::size_t count) {
    auto rng = detail::suite_stream(seed, SuiteStream::lemma1, k);
    Partial p;
    std::vector<Vector> batch;
    batch.reserve(b);
    for (std::size_t i = 0; i < count; ++i) {
      batch.clear();
      for (std::size_t j = 0; j < b; ++j) {
        batch.push_back(sample_per_example(g, params, spec, rng).value);
      }
      const double dn = l2_norm(microbatch_mean(batch) - center);
      p.sum += dn;
      p.sum_sq += dn * dn;
    }
    return p;
  });
  Partial total;
  for (const auto& p : parts) {
    total.sum += p.sum;
    total.sum_sq += p.sum_sq;
  }
  const double nd = static_cast<double>(n);
  const double mean = total.sum / nd;
  const double var = n > 1 ? std::max(0.0, (total.sum_sq - nd * mean * mean) / (nd - 1.0)) : 0.0;
  const double stderr_ = std::sqrt(var / nd);
  const double bound =
      opt.bound_multiplier * lemma1_bound(b, params.epsilon, params.sigma, l2_norm(g), l2_norm(mu));
  const double margin = bound + opt.stderr_slack * stderr_ - mean;
  return {"lemma1_b" + std::to_string(b) + "_eps" + std::to_string(params.epsilon) + "_sigma" +
              std::to_string(params.sigma) + "_d" + std::to_string(g.dim()),
          n, mean, bound, margin, margin >= 0.0, seed};
}

/// Sample variance of per-example gradients vs per_example_variance(...).
inline McReport mc_variance_identity(const Vector& g, const GradientModelParams& params,
                                     const DraggerSpec& spec, std::size_t n, std::uint64_t seed,
                                     const McSettings& mc = {}, double rel_tol = 0.01) {
  params.validate();
  spec.validate();
  detail::require_fixed_ratio(spec, "identity");
  if (n == 0) throw std::invalid_argument("n must be positive");
  const auto model = detail::model_mean(g, params.epsilon, spec);
  const Vector& center = model.first;
  const Vector& mu = model.second;

  struct Partial {
    std::vector<double> sum;
    double sum_sq = 0.0;
  };
  // Deviations are taken about the known model mean; the sample variance is
  // shift invariant and this avoids cancellation.
  auto parts = detail::run_partitioned<Partial>(n, mc, [&](std::size_t k, std::size_t, std::size_t count) {
    auto rng = detail::suite_stream(seed, SuiteStream::variance, k);
    Partial p;
    p.sum.assign(g.dim(), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      const Vector y = sample_per_example(g, params, spec, rng).value - center;
      for (std::size_t c = 0; c < y.dim(); ++c) p.sum[c] += y[c];
      p.sum_sq += squared_norm(y);
    }
    return p;
  });
  std::vector<double> sum(g.dim(), 0.0);
  double sum_sq = 0.0;
  for (const auto& p : parts) {
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += p.sum[c];
    sum_sq += p.sum_sq;
  }
  const double nd = static_cast<double>(n);
  double mean_sq = 0.0;
  for (double s : sum) mean_sq += (s / nd) * (s / nd);
  const double est = sum_sq / nd - mean_sq;
  const double ref = per_example_variance(l2_norm(g), l2_norm(mu), params.epsilon, params.sigma);
  const double err = ref > 0.0 ? std::abs(est - ref) / ref : std::abs(est);
  const bool pass = ref > 0.0 ? err <= rel_tol : err <= 1e-12 * (1.0 + squared_norm(g));
  return {"variance_identity_eps" + std::to_string(params.epsilon) + "_sigma" +
              std::to_string(params.sigma) + "_d" + std::to_string(g.dim()),
          n, est, ref, err, pass, seed};
}

// ---------------------------------------------------------------------------
// Cosine-similarity structure

struct CosineStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct CosineExperiment {
  CosineStats dragger_benign;
  CosineStats benign_benign;
  std::size_t resampled = 0;  // zero-norm benign draws replaced
};

namespace detail {
inline CosineStats summarize(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}
}  // namespace detail

/// n_pairs dragger-vs-benign and n_pairs benign-vs-benign cosine
/// similarities of per-example gradients at w.
inline CosineExperiment cosine_experiment(const Problem& p, const GradientModelParams& params,
                                          const DraggerSpec& spec, const Vector& w,
                                          std::size_t n_pairs, std::uint64_t seed) {
  params.validate();
  spec.validate();
  if (n_pairs < 2) throw std::invalid_argument("need at least two pairs");
  const Vector g = p.grad(w);
  auto rng = detail::suite_stream(seed, SuiteStream::cosine, 0);
  CosineExperiment out;
  constexpr std::size_t kMaxAttempts = 1000;
  auto benign = [&] {
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Vector v = sample_benign(g, params.sigma, rng);
      if (!v.is_zero()) return v;
      ++out.resampled;
    }
    throw std::runtime_error("benign gradients are identically zero");
  };
  std::vector<double> db;
  std::vector<double> bb;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Vector mu = make_dragger(g, spec, rng);
    db.push_back(cosine_similarity(mu, benign()));
  }
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Vector a = benign();
    bb.push_back(cosine_similarity(a, benign()));
  }
  out.dragger_benign = detail::summarize(db);
  out.benign_benign = detail::summarize(bb);
  return out;
}

// ---------------------------------------------------------------------------
// Norm-ratio proxy

/// Trimmed mean of benign norms (largest floor(trim * n) removed) divided by
/// the plain mean of dragger norms.
inline double c_hat_proxy(std::vector<double> benign_norms, std::span<const double> dragger_norms,
                          double trim_fraction) {
  if (benign_norms.empty() || dragger_norms.empty()) {
    throw std::invalid_argument("proxy needs benign and dragger norms");
  }
  if (!(trim_fraction >= 0.0 && trim_fraction < 1.0)) {
    throw std::invalid_argument("trim fraction must lie in [0, 1)");
  }
  std::sort(benign_norms.begin(), benign_norms.end());
  const auto drop = static_cast<std::size_t>(
      std::floor(trim_fraction * static_cast<double>(benign_norms.size())));
  const std::size_t keep = benign_norms.size() - drop;
  if (keep == 0) throw std::invalid_argument("no benign norms survive trimming");
  double num = 0.0;
  for (std::size_t i = 0; i < keep; ++i) num += benign_norms[i];
  num /= static_cast<double>(keep);
  double den = 0.0;
  for (double d : dragger_norms) den += d;
  den /= static_cast<double>(dragger_norms.size());
  if (den == 0.0) throw std::invalid_argument("dragger norms average to zero");
  return num / den;
}

}  // namespace mbclip
