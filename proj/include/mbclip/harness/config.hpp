#pragma once

// Experiment configuration: a JSON tree with strict keys. Parsing checks
// types and ranges; validate_for() builds every module object a command
// needs so preconditions fail before any run starts.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mbclip/bounds.hpp"
#include "mbclip/clipping.hpp"
#include "mbclip/gradient_model.hpp"
#include "mbclip/optimizer.hpp"
#include "mbclip/problems.hpp"

namespace mbclip::harness {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + ": must be finite");
  return x;
}

inline std::uint64_t as_uint(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(where + ": must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (x >= 0.0 && x < 1.8e19 && std::floor(x) == x) return static_cast<std::uint64_t>(x);
  }
  throw ConfigError(where + ": expected a non-negative integer");
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

inline std::vector<double> as_numbers(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline std::vector<std::uint64_t> as_uints(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_uint(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline std::vector<std::size_t> as_sizes(const json& v, const std::string& where) {
  std::vector<std::size_t> out;
  for (auto x : as_uints(v, where)) out.push_back(static_cast<std::size_t>(x));
  return out;
}

template <class T, class Fn>
T get_or(const json& obj, const char* key, const std::string& where, T fallback, Fn conv) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  return conv(*it, join(where, key));
}

inline double get_number(const json& obj, const char* key, const std::string& where,
                         std::optional<double> fallback = std::nullopt) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (!fallback) throw ConfigError(join(where, key) + ": required");
    return *fallback;
  }
  return as_number(*it, join(where, key));
}

inline std::size_t get_size(const json& obj, const char* key, const std::string& where,
                            std::optional<std::size_t> fallback = std::nullopt) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (!fallback) throw ConfigError(join(where, key) + ": required");
    return *fallback;
  }
  return static_cast<std::size_t>(as_uint(*it, join(where, key)));
}

inline void require_positive(double x, const std::string& where) {
  if (!(x > 0.0)) throw ConfigError(where + ": must be positive");
}

inline void require_probability(double x, const std::string& where) {
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(where + ": must lie in [0, 1]");
}

}  // namespace detail

struct ProblemConfig {
  std::string kind = "quadratic";
  std::vector<double> eigenvalues;  // quadratic
  std::string data_file;            // logistic, optional
  std::size_t rows = 200;
  std::size_t cols = 8;
  std::uint64_t data_seed = 1;
  double flip_fraction = 0.1;
  double l2_reg = 0.01;

  std::size_t dim() const { return kind == "quadratic" ? eigenvalues.size() : cols; }

  Problem build() const {
    if (kind == "quadratic") return quadratic_problem(eigenvalues);
    LogisticData data = data_file.empty()
                            ? synthetic_logistic_data(rows, cols, data_seed, flip_fraction)
                            : load_logistic_data(data_file);
    return logistic_problem(std::move(data), l2_reg);
  }
};

struct ModelConfig {
  double epsilon = 0.0;
  double sigma = 0.0;
  double c = 1.0;
  double C = 1.0;
  std::vector<double> base_direction;  // empty: alternating +1/-1
  std::string schedule = "none";       // none | measured_proxy | sweet_spot | points
  std::vector<std::pair<double, double>> schedule_points;

  GradientModelParams params(std::size_t dim) const { return {epsilon, sigma, dim}; }

  DraggerSpec dragger(std::size_t dim) const {
    std::vector<double> base = base_direction;
    if (base.empty()) {
      base.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) base[i] = i % 2 == 0 ? 1.0 : -1.0;
    }
    DraggerSpec spec{Vector(std::move(base)), c, C, {}};
    if (schedule == "measured_proxy") {
      spec.ratio_schedule = RatioSchedule::measured_proxy_reciprocal();
    } else if (schedule == "sweet_spot") {
      spec.ratio_schedule = [](double b) {
        return sweet_spot_schedule(static_cast<std::size_t>(b));
      };
    } else if (schedule == "points") {
      spec.ratio_schedule = RatioSchedule(schedule_points);
    }
    return spec;
  }
};

struct ClipConfig {
  std::size_t B = 1;
  std::optional<std::size_t> b;
  std::vector<std::size_t> b_grid;
  std::string mode = "adaptive";
  double rho = 1.0;  // fixed mode only

  ClipMode clip_mode() const {
    if (mode == "fixed") return FixedMode{rho};
    if (mode == "normalized") return NormalizedMode{};
    return AdaptiveMode{};
  }
  ClipSpec spec(std::size_t micro) const { return {B, micro, clip_mode()}; }
};

struct RunSection {
  std::size_t T = 1;
  LrRule lr = TheoremLr{};
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> initial_w;  // empty: filled with initial_fill
  double initial_fill = 1.0;
  std::vector<std::string> algorithms{"sgd", "mcsgd"};

  Vector initial_point(std::size_t dim) const {
    if (!initial_w.empty()) return Vector(initial_w);
    return Vector::filled(dim, initial_fill);
  }
};

struct Lemma2Suite {
  std::size_t n = 0;
  std::vector<std::size_t> dims;
};

struct Lemma1Suite {
  std::size_t n = 0;
  std::vector<std::size_t> b_grid;
  std::vector<double> epsilon_grid;
  std::vector<double> sigma_grid;
  std::vector<std::size_t> dim_grid;
  double ratio = 2.0;
  double g_norm = 1.0;
  double bound_multiplier = 1.0;  // test hook
};

struct VarianceSuite {
  std::size_t n = 0;
  std::vector<double> epsilon_grid;
  std::vector<double> sigma_grid;
  std::vector<std::size_t> dim_grid;
  double ratio = 2.0;
  double g_norm = 1.0;
  double rel_tol = 0.01;
};

struct CosineSuite {
  std::size_t n_pairs = 100;
  std::size_t dim = 64;
  double noise_fraction = 0.1;  // sigma = noise_fraction * |g|
  double ratio = 2.0;
  double max_abs_dragger_mean = 0.05;
  double min_benign_mean = 0.9;
};

struct VerifySection {
  std::uint64_t seed = 1;
  std::size_t partitions = 16;
  std::optional<Lemma2Suite> lemma2;
  std::optional<Lemma1Suite> lemma1;
  std::optional<VarianceSuite> variance;
  std::optional<CosineSuite> cosine;
};

struct BoundsSection {
  std::vector<std::size_t> T_grid;
  std::vector<std::size_t> b_grid;
  std::vector<double> epsilon_grid;
  double L = 1.0;
  double loss_gap = 1.0;
  double sigma = 1.0;
  std::optional<double> sigma_b;  // defaults to sigma
  std::size_t B = 1;
  double c = 1.0;
  double C = 1.0;
  std::optional<double> eta;  // defaults to 1/(L sqrt(T))
  double g_norm = 1.0;
  double mu_norm = 1.0;
};

struct ExperimentConfig {
  std::optional<ProblemConfig> problem;
  std::optional<ModelConfig> model;
  std::optional<ClipConfig> clip;
  std::optional<RunSection> run;
  std::optional<VerifySection> verify;
  std::optional<BoundsSection> bounds;
  std::string output_dir = "mbclip_out";
};

namespace detail {

inline ProblemConfig parse_problem(const json& j) {
  const std::string w = "problem";
  check_keys(j, w, {"kind", "eigenvalues", "dim", "spectrum", "data_file", "rows", "data_seed",
                    "flip_fraction", "l2_reg"});
  ProblemConfig p;
  p.kind = as_string(j.value("kind", json("quadratic")), w + ".kind");
  if (p.kind == "quadratic") {
    for (const char* k : {"data_file", "rows", "data_seed", "flip_fraction", "l2_reg"}) {
      if (j.contains(k)) throw ConfigError(w + "." + k + ": not a quadratic parameter");
    }
    if (j.contains("eigenvalues")) {
      if (j.contains("dim") || j.contains("spectrum")) {
        throw ConfigError(w + ": give either eigenvalues or dim+spectrum");
      }
      p.eigenvalues = as_numbers(j["eigenvalues"], w + ".eigenvalues");
    } else {
      const std::size_t d = get_size(j, "dim", w);
      const auto s = as_numbers(j.value("spectrum", json::array({0.1, 1.0})), w + ".spectrum");
      if (s.size() != 2) throw ConfigError(w + ".spectrum: expected [low, high]");
      if (d == 0) throw ConfigError(w + ".dim: must be positive");
      p.eigenvalues = linear_spectrum(d, s[0], s[1]);
    }
    for (double l : p.eigenvalues) require_positive(l, w + ".eigenvalues");
  } else if (p.kind == "logistic") {
    if (j.contains("eigenvalues") || j.contains("spectrum")) {
      throw ConfigError(w + ": eigenvalues/spectrum are quadratic parameters");
    }
    if (j.contains("data_file")) p.data_file = as_string(j["data_file"], w + ".data_file");
    p.rows = get_size(j, "rows", w, p.rows);
    p.cols = get_size(j, "dim", w, p.cols);
    p.data_seed = get_or<std::uint64_t>(j, "data_seed", w, p.data_seed, as_uint);
    p.flip_fraction = get_number(j, "flip_fraction", w, p.flip_fraction);
    require_probability(p.flip_fraction, w + ".flip_fraction");
    p.l2_reg = get_number(j, "l2_reg", w, p.l2_reg);
    if (!(p.l2_reg >= 0.0)) throw ConfigError(w + ".l2_reg: must be non-negative");
    if (p.data_file.empty() && (p.rows == 0 || p.cols == 0)) {
      throw ConfigError(w + ": rows and dim must be positive");
    }
  } else {
    throw ConfigError(w + ".kind: expected 'quadratic' or 'logistic', got '" + p.kind + "'");
  }
  return p;
}

inline ModelConfig parse_model(const json& j) {
  const std::string w = "model";
  check_keys(j, w, {"epsilon", "sigma", "c", "C", "base_direction", "ratio_schedule"});
  ModelConfig m;
  m.epsilon = get_number(j, "epsilon", w);
  require_probability(m.epsilon, w + ".epsilon");
  m.sigma = get_number(j, "sigma", w);
  if (!(m.sigma >= 0.0)) throw ConfigError(w + ".sigma: must be non-negative");
  m.c = get_number(j, "c", w, 1.0);
  m.C = get_number(j, "C", w, m.c);
  require_positive(m.c, w + ".c");
  if (!(m.c <= m.C)) throw ConfigError(w + ": need c <= C");
  if (j.contains("base_direction")) {
    m.base_direction = as_numbers(j["base_direction"], w + ".base_direction");
  }
  if (j.contains("ratio_schedule")) {
    const json& s = j["ratio_schedule"];
    if (s.is_string()) {
      m.schedule = s.get<std::string>();
      if (m.schedule != "none" && m.schedule != "measured_proxy" && m.schedule != "sweet_spot") {
        throw ConfigError(w + ".ratio_schedule: expected 'none', 'measured_proxy', "
                              "'sweet_spot' or a list of [b, c] pairs");
      }
    } else if (s.is_array() && !s.empty()) {
      m.schedule = "points";
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto pair = as_numbers(s[i], w + ".ratio_schedule[" + std::to_string(i) + "]");
        if (pair.size() != 2) throw ConfigError(w + ".ratio_schedule: entries are [b, c]");
        m.schedule_points.emplace_back(pair[0], pair[1]);
      }
    } else {
      throw ConfigError(w + ".ratio_schedule: expected a name or a list of [b, c] pairs");
    }
  }
  return m;
}

inline ClipConfig parse_clip(const json& j) {
  const std::string w = "clip";
  check_keys(j, w, {"B", "b", "b_grid", "mode", "rho"});
  ClipConfig c;
  c.B = get_size(j, "B", w);
  if (c.B == 0) throw ConfigError(w + ".B: must be positive");
  if (j.contains("b")) c.b = get_size(j, "b", w);
  if (j.contains("b_grid")) c.b_grid = as_sizes(j["b_grid"], w + ".b_grid");
  c.mode = as_string(j.value("mode", json("adaptive")), w + ".mode");
  if (c.mode != "adaptive" && c.mode != "fixed" && c.mode != "normalized") {
    throw ConfigError(w + ".mode: expected 'adaptive', 'fixed' or 'normalized'");
  }
  if (j.contains("rho")) {
    if (c.mode != "fixed") throw ConfigError(w + ".rho: only used by fixed mode");
    c.rho = get_number(j, "rho", w);
  }
  if (c.mode == "fixed") {
    if (!j.contains("rho")) throw ConfigError(w + ".rho: required by fixed mode");
    require_positive(c.rho, w + ".rho");
  }
  return c;
}

inline RunSection parse_run(const json& j) {
  const std::string w = "run";
  check_keys(j, w, {"T", "lr", "seeds", "initial_w", "algorithms"});
  RunSection r;
  r.T = get_size(j, "T", w);
  if (r.T == 0) throw ConfigError(w + ".T: must be positive");
  if (j.contains("lr")) {
    const json& lr = j["lr"];
    if (lr.is_string()) {
      if (lr.get<std::string>() != "theorem") {
        throw ConfigError(w + ".lr: expected 'theorem' or a positive number");
      }
    } else {
      const double eta = as_number(lr, w + ".lr");
      require_positive(eta, w + ".lr");
      r.lr = FixedLr{eta};
    }
  }
  if (j.contains("seeds")) r.seeds = as_uints(j["seeds"], w + ".seeds");
  if (j.contains("initial_w")) {
    const json& iw = j["initial_w"];
    if (iw.is_array()) {
      r.initial_w = as_numbers(iw, w + ".initial_w");
    } else {
      r.initial_fill = as_number(iw, w + ".initial_w");
    }
  }
  if (j.contains("algorithms")) {
    const json& a = j["algorithms"];
    if (!a.is_array() || a.empty()) throw ConfigError(w + ".algorithms: expected a non-empty array");
    r.algorithms.clear();
    for (const auto& x : a) {
      const std::string name = as_string(x, w + ".algorithms");
      if (name != "sgd" && name != "mcsgd") {
        throw ConfigError(w + ".algorithms: expected 'sgd' or 'mcsgd', got '" + name + "'");
      }
      r.algorithms.push_back(name);
    }
  }
  return r;
}

inline void require_n(std::size_t n, const std::string& where) {
  if (n == 0) throw ConfigError(where + ": sample count must be positive");
}

inline void require_probabilities(const std::vector<double>& xs, const std::string& where) {
  for (double x : xs) require_probability(x, where);
}

inline void require_non_negative(const std::vector<double>& xs, const std::string& where) {
  for (double x : xs) {
    if (!(x >= 0.0)) throw ConfigError(where + ": must be non-negative");
  }
}

inline VerifySection parse_verify(const json& j) {
  const std::string w = "verify";
  check_keys(j, w, {"seed", "partitions", "lemma2", "lemma1", "variance", "cosine"});
  VerifySection v;
  v.seed = get_or<std::uint64_t>(j, "seed", w, v.seed, as_uint);
  v.partitions = get_size(j, "partitions", w, v.partitions);
  if (v.partitions == 0) throw ConfigError(w + ".partitions: must be positive");
  if (j.contains("lemma2")) {
    const std::string s = w + ".lemma2";
    const json& o = j["lemma2"];
    check_keys(o, s, {"n", "dims"});
    Lemma2Suite l{get_size(o, "n", s), as_sizes(o.value("dims", json::array({3, 8, 64})), s + ".dims")};
    require_n(l.n, s + ".n");
    for (auto d : l.dims) {
      if (d < 3) throw ConfigError(s + ".dims: need dim >= 3");
    }
    v.lemma2 = l;
  }
  if (j.contains("lemma1")) {
    const std::string s = w + ".lemma1";
    const json& o = j["lemma1"];
    check_keys(o, s, {"n", "b_grid", "epsilon_grid", "sigma_grid", "dim_grid", "ratio", "g_norm",
                      "lemma1_bound_multiplier"});
    Lemma1Suite l;
    l.n = get_size(o, "n", s);
    require_n(l.n, s + ".n");
    l.b_grid = as_sizes(o.value("b_grid", json::array({1, 2, 4, 16, 64})), s + ".b_grid");
    l.epsilon_grid = as_numbers(o.value("epsilon_grid", json::array({0.1, 0.25, 0.5})), s + ".epsilon_grid");
    l.sigma_grid = as_numbers(o.value("sigma_grid", json::array({0.1, 1.0})), s + ".sigma_grid");
    l.dim_grid = as_sizes(o.value("dim_grid", json::array({8, 64})), s + ".dim_grid");
    l.ratio = get_number(o, "ratio", s, l.ratio);
    l.g_norm = get_number(o, "g_norm", s, l.g_norm);
    l.bound_multiplier = get_number(o, "lemma1_bound_multiplier", s, l.bound_multiplier);
    for (auto b : l.b_grid) {
      if (b == 0) throw ConfigError(s + ".b_grid: must be positive");
    }
    require_probabilities(l.epsilon_grid, s + ".epsilon_grid");
    require_non_negative(l.sigma_grid, s + ".sigma_grid");
    for (auto d : l.dim_grid) {
      if (d < 2) throw ConfigError(s + ".dim_grid: need dim >= 2");
    }
    require_positive(l.ratio, s + ".ratio");
    require_positive(l.g_norm, s + ".g_norm");
    require_positive(l.bound_multiplier, s + ".lemma1_bound_multiplier");
    v.lemma1 = l;
  }
  if (j.contains("variance")) {
    const std::string s = w + ".variance";
    const json& o = j["variance"];
    check_keys(o, s, {"n", "epsilon_grid", "sigma_grid", "dim_grid", "ratio", "g_norm", "rel_tol"});
    VarianceSuite l;
    l.n = get_size(o, "n", s);
    require_n(l.n, s + ".n");
    l.epsilon_grid = as_numbers(o.value("epsilon_grid", json::array({0.1, 0.25, 0.5})), s + ".epsilon_grid");
    l.sigma_grid = as_numbers(o.value("sigma_grid", json::array({0.1, 1.0})), s + ".sigma_grid");
    l.dim_grid = as_sizes(o.value("dim_grid", json::array({8, 64})), s + ".dim_grid");
    l.ratio = get_number(o, "ratio", s, l.ratio);
    l.g_norm = get_number(o, "g_norm", s, l.g_norm);
    l.rel_tol = get_number(o, "rel_tol", s, l.rel_tol);
    require_probabilities(l.epsilon_grid, s + ".epsilon_grid");
    require_non_negative(l.sigma_grid, s + ".sigma_grid");
    for (auto d : l.dim_grid) {
      if (d < 2) throw ConfigError(s + ".dim_grid: need dim >= 2");
    }
    require_positive(l.ratio, s + ".ratio");
    require_positive(l.g_norm, s + ".g_norm");
    require_positive(l.rel_tol, s + ".rel_tol");
    v.variance = l;
  }
  if (j.contains("cosine")) {
    const std::string s = w + ".cosine";
    const json& o = j["cosine"];
    check_keys(o, s, {"n_pairs", "dim", "noise_fraction", "ratio", "max_abs_dragger_mean",
                      "min_benign_mean"});
    CosineSuite c;
    c.n_pairs = get_size(o, "n_pairs", s, c.n_pairs);
    if (c.n_pairs < 2) throw ConfigError(s + ".n_pairs: need at least two pairs");
    c.dim = get_size(o, "dim", s, c.dim);
    if (c.dim < 2) throw ConfigError(s + ".dim: need dim >= 2");
    c.noise_fraction = get_number(o, "noise_fraction", s, c.noise_fraction);
    require_positive(c.noise_fraction, s + ".noise_fraction");
    c.ratio = get_number(o, "ratio", s, c.ratio);
    require_positive(c.ratio, s + ".ratio");
    c.max_abs_dragger_mean = get_number(o, "max_abs_dragger_mean", s, c.max_abs_dragger_mean);
    c.min_benign_mean = get_number(o, "min_benign_mean", s, c.min_benign_mean);
    v.cosine = c;
  }
  if (!v.lemma2 && !v.lemma1 && !v.variance && !v.cosine) {
    throw ConfigError(w + ": no suites configured");
  }
  return v;
}

inline BoundsSection parse_bounds(const json& j) {
  const std::string w = "bounds";
  check_keys(j, w, {"T_grid", "b_grid", "epsilon_grid", "L", "loss_gap", "sigma", "sigma_b", "B",
                    "c", "C", "eta", "g_norm", "mu_norm"});
  BoundsSection s;
  s.T_grid = as_sizes(j.value("T_grid", json()), w + ".T_grid");
  s.b_grid = as_sizes(j.value("b_grid", json()), w + ".b_grid");
  s.epsilon_grid = as_numbers(j.value("epsilon_grid", json()), w + ".epsilon_grid");
  for (auto t : s.T_grid) {
    if (t == 0) throw ConfigError(w + ".T_grid: must be positive");
  }
  for (auto b : s.b_grid) {
    if (b == 0) throw ConfigError(w + ".b_grid: must be positive");
  }
  require_probabilities(s.epsilon_grid, w + ".epsilon_grid");
  s.L = get_number(j, "L", w, s.L);
  require_positive(s.L, w + ".L");
  s.loss_gap = get_number(j, "loss_gap", w, s.loss_gap);
  if (!(s.loss_gap >= 0.0)) throw ConfigError(w + ".loss_gap: must be non-negative");
  s.sigma = get_number(j, "sigma", w, s.sigma);
  if (!(s.sigma >= 0.0)) throw ConfigError(w + ".sigma: must be non-negative");
  if (j.contains("sigma_b")) {
    s.sigma_b = get_number(j, "sigma_b", w);
    if (!(*s.sigma_b >= 0.0)) throw ConfigError(w + ".sigma_b: must be non-negative");
  }
  s.B = get_size(j, "B", w);
  if (s.B == 0) throw ConfigError(w + ".B: must be positive");
  s.c = get_number(j, "c", w, s.c);
  s.C = get_number(j, "C", w, s.C);
  require_positive(s.c, w + ".c");
  require_positive(s.C, w + ".C");
  if (j.contains("eta")) {
    s.eta = get_number(j, "eta", w);
    require_positive(*s.eta, w + ".eta");
  }
  s.g_norm = get_number(j, "g_norm", w, s.g_norm);
  s.mu_norm = get_number(j, "mu_norm", w, s.mu_norm);
  if (!(s.g_norm >= 0.0) || !(s.mu_norm >= 0.0)) {
    throw ConfigError(w + ": g_norm and mu_norm must be non-negative");
  }
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  detail::check_keys(j, "config", {"problem", "model", "clip", "run", "verify", "bounds", "output"});
  ExperimentConfig cfg;
  if (j.contains("problem")) cfg.problem = detail::parse_problem(j["problem"]);
  if (j.contains("model")) cfg.model = detail::parse_model(j["model"]);
  if (j.contains("clip")) cfg.clip = detail::parse_clip(j["clip"]);
  if (j.contains("run")) cfg.run = detail::parse_run(j["run"]);
  if (j.contains("verify")) cfg.verify = detail::parse_verify(j["verify"]);
  if (j.contains("bounds")) cfg.bounds = detail::parse_bounds(j["bounds"]);
  if (j.contains("output")) {
    detail::check_keys(j["output"], "output", {"dir"});
    cfg.output_dir = detail::as_string(j["output"].value("dir", json(cfg.output_dir)), "output.dir");
  }
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Everything a training command needs, built and checked up front.
struct TrainingSetup {
  Problem problem;
  GradientModelParams params;
  DraggerSpec dragger;
  Vector initial_w;
  double loss_gap;  // L(w_0) - L*
};

/// Builds the problem, model and initial point and checks their
/// preconditions. Throws ConfigError naming the violated constraint.
inline TrainingSetup build_training(const ExperimentConfig& cfg) {
  if (!cfg.problem) throw ConfigError("problem: section required");
  if (!cfg.model) throw ConfigError("model: section required");
  if (!cfg.run) throw ConfigError("run: section required");
  try {
    Problem p = cfg.problem->build();
    const std::size_t d = p.dim();
    GradientModelParams params = cfg.model->params(d);
    params.validate();
    if (params.epsilon > 0.0 && d < 2) throw ConfigError("model: draggers need dim >= 2");
    if (!cfg.model->base_direction.empty() && cfg.model->base_direction.size() != d) {
      throw ConfigError("model.base_direction: length must equal problem dimension " +
                        std::to_string(d));
    }
    DraggerSpec spec = cfg.model->dragger(d);
    spec.validate();
    if (!cfg.run->initial_w.empty() && cfg.run->initial_w.size() != d) {
      throw ConfigError("run.initial_w: length must equal problem dimension " + std::to_string(d));
    }
    Vector w0 = cfg.run->initial_point(d);
    const double gap = p.loss(w0) - p.optimum_L_star();
    RunConfig probe{cfg.run->T, ClipSpec{}, cfg.run->lr, 0, w0};
    probe.learning_rate(p.smoothness_L());
    return {std::move(p), params, std::move(spec), std::move(w0), gap};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

inline void validate_clip_spec(const ClipSpec& spec) {
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("clip: ") + e.what());
  }
}

}  // namespace mbclip::harness
