#pragma once

// Smooth loss testbeds with a certified smoothness constant L and a known
// (or numerically computed) optimum value L*.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mbclip/linalg.hpp"
#include "mbclip/random.hpp"

namespace mbclip {

/// A smooth objective. Copies share the lazily computed optimum.
class Problem {
 public:
  using LossFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;

  Problem(std::size_t dim, LossFn loss, GradFn grad, double smoothness_L,
          std::function<double()> optimum, std::string description)
      : dim_(dim),
        loss_(std::move(loss)),
        grad_(std::move(grad)),
        smoothness_L_(smoothness_L),
        optimum_(std::make_shared<LazyOptimum>(std::move(optimum))),
        description_(std::move(description)) {}

  std::size_t dim() const { return dim_; }
  double loss(const Vector& w) const { return loss_(require_dim(w)); }
  Vector grad(const Vector& w) const { return grad_(require_dim(w)); }
  double smoothness_L() const { return smoothness_L_; }
  const std::string& description() const { return description_; }

  /// Computed on first use, then cached. Throws if it cannot be attained.
  double optimum_L_star() const { return optimum_->get(); }

 private:
  struct LazyOptimum {
    explicit LazyOptimum(std::function<double()> f) : compute(std::move(f)) {}
    double get() {
      std::call_once(once, [this] { value = compute(); });
      return value;
    }
    std::function<double()> compute;
    std::once_flag once;
    double value = 0.0;
  };

  const Vector& require_dim(const Vector& w) const {
    if (w.dim() != dim_) {
      throw std::invalid_argument("problem expects dimension " + std::to_string(dim_));
    }
    return w;
  }

  std::size_t dim_;
  LossFn loss_;
  GradFn grad_;
  double smoothness_L_;
  std::shared_ptr<LazyOptimum> optimum_;
  std::string description_;
};

/// L(w) = 1/2 sum_i lambda_i w_i^2.
inline Problem quadratic_problem(std::vector<double> eigenvalues) {
  if (eigenvalues.empty()) throw std::invalid_argument("quadratic needs eigenvalues");
  for (double l : eigenvalues) {
    if (!(l > 0.0) || !std::isfinite(l)) {
      throw std::invalid_argument("quadratic eigenvalues must be positive");
    }
  }
  const double L = *std::max_element(eigenvalues.begin(), eigenvalues.end());
  auto lam = std::make_shared<const std::vector<double>>(std::move(eigenvalues));
  const std::size_t d = lam->size();
  auto loss = [lam](const Vector& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.dim(); ++i) acc += (*lam)[i] * w[i] * w[i];
    return 0.5 * acc;
  };
  auto grad = [lam](const Vector& w) {
    std::vector<double> g(w.dim());
    for (std::size_t i = 0; i < w.dim(); ++i) g[i] = (*lam)[i] * w[i];
    return Vector(std::move(g));
  };
  return Problem(d, loss, grad, L, [] { return 0.0; },
                 "diagonal quadratic, d=" + std::to_string(d));
}

/// Evenly spaced spectrum lo..hi (inclusive).
inline std::vector<double> linear_spectrum(std::size_t d, double lo, double hi) {
  if (d == 0) throw std::invalid_argument("spectrum size must be positive");
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = d == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(d - 1);
  }
  return out;
}

struct LogisticData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> features;  // row-major rows x cols
  std::vector<double> labels;    // each +1 or -1

  double x(std::size_t r, std::size_t c) const { return features[r * cols + c]; }
};

struct GradientDescentSettings {
  double tolerance = 1e-10;
  std::size_t max_iterations = 500000;
};

namespace detail {

// log(1 + exp(-z)) without overflow.
inline double log1p_exp_neg(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

// 1 / (1 + exp(z)).
inline double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

inline double max_eigenvalue_gram(const LogisticData& data) {
  Eigen::MatrixXd X(data.rows, data.cols);
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < data.cols; ++c) X(r, c) = data.x(r, c);
  const Eigen::MatrixXd gram = (X.transpose() * X) / static_cast<double>(data.rows);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

}  // namespace detail

inline Problem logistic_problem(LogisticData data, double l2_reg,
                                GradientDescentSettings solver = {}) {
  if (data.rows == 0 || data.cols == 0) throw std::invalid_argument("empty logistic data");
  if (data.features.size() != data.rows * data.cols) {
    throw std::invalid_argument("feature matrix shape mismatch");
  }
  if (data.labels.size() != data.rows) {
    throw std::invalid_argument("label count does not match feature rows");
  }
  if (!(l2_reg >= 0.0)) throw std::invalid_argument("l2_reg must be non-negative");
  for (std::size_t r = 0; r < data.rows; ++r) {
    if (data.labels[r] != 1.0 && data.labels[r] != -1.0) {
      throw std::invalid_argument("labels must be +1 or -1");
    }
    bool nonzero = false;
    for (std::size_t c = 0; c < data.cols; ++c) {
      if (!std::isfinite(data.x(r, c))) throw std::invalid_argument("non-finite feature");
      nonzero = nonzero || data.x(r, c) != 0.0;
    }
    if (!nonzero) throw std::invalid_argument("feature rows must be nonzero");
  }

  // Slight upward rounding keeps L a certified upper bound.
  const double L = (0.25 * detail::max_eigenvalue_gram(data) + l2_reg) * (1.0 + 1e-12);
  auto shared = std::make_shared<const LogisticData>(std::move(data));
  const std::size_t d = shared->cols;

  auto loss = [shared, l2_reg](const Vector& w) {
    const auto& D = *shared;
    double acc = 0.0;
    for (std::size_t r = 0; r < D.rows; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < D.cols; ++c) z += D.x(r, c) * w[c];
      acc += detail::log1p_exp_neg(D.labels[r] * z);
    }
    return acc / static_cast<double>(D.rows) + 0.5 * l2_reg * squared_norm(w);
  };
  auto grad = [shared, l2_reg](const Vector& w) {
    const auto& D = *shared;
    std::vector<double> g(D.cols, 0.0);
    for (std::size_t r = 0; r < D.rows; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < D.cols; ++c) z += D.x(r, c) * w[c];
      const double y = D.labels[r];
      const double coef = -y * detail::sigmoid_neg(y * z);
      for (std::size_t c = 0; c < D.cols; ++c) g[c] += coef * D.x(r, c);
    }
    const double inv_n = 1.0 / static_cast<double>(D.rows);
    for (std::size_t c = 0; c < D.cols; ++c) g[c] = g[c] * inv_n + l2_reg * w[c];
    return Vector(std::move(g));
  };
  auto optimum = [loss, grad, L, d, solver] {
    Vector w = Vector::zeros(d);
    for (std::size_t it = 0; it < solver.max_iterations; ++it) {
      const Vector g = grad(w);
      if (l2_norm(g) <= solver.tolerance) return loss(w);
      w.add_scaled(-1.0 / L, g);
    }
    throw std::runtime_error(
        "logistic optimum not attained by gradient descent; data may be separable "
        "without l2_reg");
  };
  return Problem(d, loss, grad, L, optimum,
                 "logistic regression, n=" + std::to_string(shared->rows) +
                     ", d=" + std::to_string(d) + ", l2=" + std::to_string(l2_reg));
}

/// Gaussian features, labels from a random linear teacher with a fraction of
/// flipped labels so the data is not separable.
inline LogisticData synthetic_logistic_data(std::size_t rows, std::size_t cols,
                                            std::uint64_t seed, double flip_fraction = 0.1) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("synthetic data needs rows and cols");
  LogisticData data;
  data.rows = rows;
  data.cols = cols;
  data.features.resize(rows * cols);
  data.labels.resize(rows);
  std::normal_distribution<double> normal(0.0, 1.0);
  PhiloxStream teacher_rng(seed, 0, 0);
  std::vector<double> teacher(cols);
  for (double& t : teacher) t = normal(teacher_rng);
  for (std::size_t r = 0; r < rows; ++r) {
    PhiloxStream rng(seed, 1, static_cast<std::uint32_t>(r));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = normal(rng);
      data.features[r * cols + c] = x;
      z += x * teacher[c];
    }
    double y = z >= 0.0 ? 1.0 : -1.0;
    if (uniform01(rng) < flip_fraction) y = -y;
    data.labels[r] = y;
  }
  return data;
}

/// One example per line: label then features, separated by commas and/or
/// whitespace. Blank lines and lines starting with '#' are skipped.
inline LogisticData load_logistic_data(std::istream& in) {
  LogisticData data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      if (row.empty() && tok.front() == '#') break;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw std::invalid_argument("line " + std::to_string(line_no) +
                                    ": not a number: " + tok);
      }
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (row.size() < 2) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": need a label and at least one feature");
    }
    if (data.cols == 0) {
      data.cols = row.size() - 1;
    } else if (row.size() - 1 != data.cols) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": inconsistent feature count");
    }
    data.labels.push_back(row.front());
    data.features.insert(data.features.end(), row.begin() + 1, row.end());
    ++data.rows;
  }
  if (data.rows == 0) throw std::invalid_argument("no examples in data file");
  return data;
}

inline LogisticData load_logistic_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file: " + path);
  return load_logistic_data(in);
}

/// Central differences (L(w + h e_i) - L(w - h e_i)) / 2h.
inline Vector finite_diff_grad(const Problem& p, const Vector& w, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  std::vector<double> base(w.begin(), w.end());
  std::vector<double> out(w.dim());
  for (std::size_t i = 0; i < w.dim(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += h;
    minus[i] -= h;
    out[i] = (p.loss(Vector(std::move(plus))) - p.loss(Vector(std::move(minus)))) / (2.0 * h);
  }
  return Vector(std::move(out));
}

}  // namespace mbclip
