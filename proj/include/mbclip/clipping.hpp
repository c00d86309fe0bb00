#pragma once

// Micro-batch clipping: shard a mini-batch of per-example gradients into
// contiguous micro-batches, average each, clip, and aggregate.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mbclip/linalg.hpp"

namespace mbclip {

struct AdaptiveMode {};
struct FixedMode {
  double rho;
};
struct NormalizedMode {};

using ClipMode = std::variant<AdaptiveMode, FixedMode, NormalizedMode>;

inline std::string mode_name(const ClipMode& mode) {
  if (std::holds_alternative<AdaptiveMode>(mode)) return "adaptive";
  if (std::holds_alternative<FixedMode>(mode)) return "fixed";
  return "normalized";
}

struct ClipSpec {
  std::size_t mini_batch = 1;   // B
  std::size_t micro_batch = 1;  // b
  ClipMode mode = AdaptiveMode{};

  std::size_t num_micro_batches() const { return mini_batch / micro_batch; }

  void validate() const {
    if (mini_batch == 0 || micro_batch == 0) {
      throw std::invalid_argument("batch sizes must be positive");
    }
    if (mini_batch % micro_batch != 0) {
      throw std::invalid_argument("mini-batch not divisible by micro-batch (B=" +
                                  std::to_string(mini_batch) +
                                  ", b=" + std::to_string(micro_batch) + ")");
    }
    if (const auto* fixed = std::get_if<FixedMode>(&mode); fixed && !(fixed->rho > 0.0)) {
      throw std::invalid_argument("fixed clipping bound must be positive");
    }
  }
};

/// Contiguous groups of b, in input order. Views borrow from `grads`.
inline std::vector<std::span<const Vector>> shard(std::span<const Vector> grads,
                                                   std::size_t b) {
  if (b == 0 || grads.empty() || grads.size() % b != 0) {
    throw std::invalid_argument("mini-batch not divisible by micro-batch");
  }
  std::vector<std::span<const Vector>> out;
  out.reserve(grads.size() / b);
  for (std::size_t start = 0; start < grads.size(); start += b) {
    out.push_back(grads.subspan(start, b));
  }
  return out;
}

inline Vector microbatch_mean(std::span<const Vector> micro_batch) {
  if (micro_batch.empty()) throw std::invalid_argument("empty micro-batch");
  Vector acc = sum(micro_batch);
  acc *= 1.0 / static_cast<double>(micro_batch.size());
  return acc;
}

/// rho_t: smallest L2 norm among the micro-batch gradients.
inline double adaptive_bound(std::span<const Vector> micro_grads) {
  if (micro_grads.empty()) throw std::invalid_argument("no micro-batch gradients");
  double rho = std::numeric_limits<double>::infinity();
  for (const auto& g : micro_grads) rho = std::min(rho, l2_norm(g));
  return rho;
}

/// Rescale to norm exactly rho.
inline Vector clip(const Vector& g_hat, double rho) {
  if (!(rho >= 0.0)) throw std::invalid_argument("clip bound must be non-negative");
  const double n = l2_norm(g_hat);
  if (n == 0.0) {
    if (rho > 0.0) {
      throw std::invalid_argument("cannot rescale zero gradient to positive norm");
    }
    return g_hat;
  }
  return (rho / n) * g_hat;
}

/// Standard norm clipping, min(1, rho/|g|): never scales up.
inline Vector clip_at_most(const Vector& g_hat, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("clip bound must be positive");
  const double n = l2_norm(g_hat);
  if (n <= rho) return g_hat;
  return (rho / n) * g_hat;
}

struct AdaptiveAggregate {
  Vector gradient;
  double rho;
};

inline AdaptiveAggregate aggregate_adaptive(std::span<const Vector> micro_grads) {
  const double rho = adaptive_bound(micro_grads);
  Vector acc = Vector::zeros(micro_grads.front().dim());
  for (const auto& g : micro_grads) acc += clip(g, rho);
  return {std::move(acc), rho};
}

inline Vector aggregate_fixed(std::span<const Vector> micro_grads, double rho) {
  if (micro_grads.empty()) throw std::invalid_argument("no micro-batch gradients");
  Vector acc = Vector::zeros(micro_grads.front().dim());
  for (const auto& g : micro_grads) acc += clip_at_most(g, rho);
  return acc;
}

/// (b/B) * sum_i g_i / |g_i|.
inline Vector aggregate_normalized(std::span<const Vector> micro_grads, std::size_t b,
                                   std::size_t B) {
  if (micro_grads.empty()) throw std::invalid_argument("no micro-batch gradients");
  if (b == 0 || B == 0) throw std::invalid_argument("batch sizes must be positive");
  Vector acc = Vector::zeros(micro_grads.front().dim());
  for (const auto& g : micro_grads) {
    const double n = l2_norm(g);
    if (n == 0.0) {
      throw std::invalid_argument("normalized aggregation hit a zero micro-batch gradient");
    }
    acc.add_scaled(1.0 / n, g);
  }
  acc *= static_cast<double>(b) / static_cast<double>(B);
  return acc;
}

struct Aggregate {
  Vector gradient;
  std::optional<double> rho;  // bound applied, absent for normalized mode
  bool zero_rho = false;
};

inline Aggregate aggregate(std::span<const Vector> micro_grads, const ClipSpec& spec) {
  return std::visit(
      [&](const auto& mode) -> Aggregate {
        using M = std::decay_t<decltype(mode)>;
        if constexpr (std::is_same_v<M, AdaptiveMode>) {
          auto [g, rho] = aggregate_adaptive(micro_grads);
          return {std::move(g), rho, rho == 0.0};
        } else if constexpr (std::is_same_v<M, FixedMode>) {
          return {aggregate_fixed(micro_grads, mode.rho), mode.rho, false};
        } else {
          return {aggregate_normalized(micro_grads, spec.micro_batch, spec.mini_batch),
                  std::nullopt, false};
        }
      },
      spec.mode);
}

}  // namespace mbclip
