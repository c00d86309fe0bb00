#pragma once

// Dense real vectors and the handful of operations the clipping and bound
// machinery needs. Every Vector holds at least one element and only finite
// values; any operation that would produce NaN/Inf throws std::domain_error.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mbclip {

/// Relative tolerance for orthogonality and normalization checks.
inline constexpr double kRelTol = 1e-12;

class Vector {
 public:
  explicit Vector(std::vector<double> elements) : data_(std::move(elements)) {
    if (data_.empty()) {
      throw std::invalid_argument("vector dimension must be positive");
    }
    check_finite();
  }

  Vector(std::initializer_list<double> elements)
      : Vector(std::vector<double>(elements)) {}

  static Vector zeros(std::size_t dim) {
    return Vector(std::vector<double>(dim, 0.0));
  }

  static Vector filled(std::size_t dim, double value) {
    return Vector(std::vector<double>(dim, value));
  }

  /// Standard basis vector e_index.
  static Vector unit(std::size_t dim, std::size_t index) {
    std::vector<double> v(dim, 0.0);
    v.at(index) = 1.0;
    return Vector(std::move(v));
  }

  std::size_t dim() const noexcept { return data_.size(); }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double at(std::size_t i) const { return data_.at(i); }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& elements() const noexcept { return data_; }

  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool is_zero() const noexcept {
    for (double x : data_) {
      if (x != 0.0) return false;
    }
    return true;
  }

  Vector& operator+=(const Vector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    check_finite();
    return *this;
  }

  Vector& operator-=(const Vector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    check_finite();
    return *this;
  }

  Vector& operator*=(double s) {
    for (double& x : data_) x *= s;
    check_finite();
    return *this;
  }

  /// this += s * other
  Vector& add_scaled(double s, const Vector& other) {
    require_same_dim(*this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    check_finite();
    return *this;
  }

  friend bool operator==(const Vector&, const Vector&) = default;

  static void require_same_dim(const Vector& u, const Vector& v) {
    if (u.dim() != v.dim()) {
      throw std::invalid_argument("dimension mismatch: " +
                                  std::to_string(u.dim()) + " vs " +
                                  std::to_string(v.dim()));
    }
  }

 private:
  void check_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) {
        throw std::domain_error("non-finite vector element");
      }
    }
  }

  std::vector<double> data_;
};

inline Vector operator+(Vector u, const Vector& v) { return u += v; }
inline Vector operator-(Vector u, const Vector& v) { return u -= v; }
inline Vector operator*(double s, Vector v) { return v *= s; }
inline Vector operator*(Vector v, double s) { return v *= s; }
inline Vector operator-(Vector v) { return v *= -1.0; }

/// Inner product, accumulated in index order.
inline double dot(const Vector& u, const Vector& v) {
  Vector::require_same_dim(u, v);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double squared_norm(const Vector& v) { return dot(v, v); }

inline double l2_norm(const Vector& v) { return std::sqrt(dot(v, v)); }

/// Component of v orthogonal to g: v - (v.g / |g|^2) g.
inline Vector project_orthogonal(const Vector& v, const Vector& g) {
  Vector::require_same_dim(v, g);
  const double gg = dot(g, g);
  if (gg == 0.0) {
    throw std::invalid_argument("cannot project against zero direction");
  }
  Vector out = v;
  out.add_scaled(-dot(v, g) / gg, g);
  // One refinement pass removes the residual left by cancellation.
  out.add_scaled(-dot(out, g) / gg, g);
  return out;
}

inline double cosine_similarity(const Vector& u, const Vector& v) {
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw std::invalid_argument("cosine similarity undefined for zero vector");
  }
  const double c = dot(u, v) / (nu * nv);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

/// Sequential sum in input order.
inline Vector sum(std::span<const Vector> vs) {
  if (vs.empty()) throw std::invalid_argument("sum of empty sequence");
  Vector acc = Vector::zeros(vs.front().dim());
  for (const auto& v : vs) acc += v;
  return acc;
}

}  // namespace mbclip
