#pragma once

// The four CLI subcommands. Each returns a process exit code and writes
// human-readable progress to `log` and diagnostics to `err`.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mbclip/bounds.hpp"
#include "mbclip/clipping.hpp"
#include "mbclip/harness/config.hpp"
#include "mbclip/harness/output.hpp"
#include "mbclip/optimizer.hpp"
#include "mbclip/verification.hpp"

namespace mbclip::harness {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfigError = 2,
  kExitDivergence = 3,
  kExitVerificationFailure = 4,
};

struct CliOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::size_t jobs = 1;
};

inline constexpr const char* kHypothesisViolated = "hypothesis violated";

namespace detail {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. fn must not throw.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < workers; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct RunTask {
  std::string run_id;
  std::uint64_t seed;
  bool clipped;
  ClipSpec spec;
};

struct RunOutcome {
  double min_grad_norm = 0.0;
  double final_loss = 0.0;
  double lr = 0.0;
  int code = kExitOk;
  std::string error;
};

inline std::string csv_name(const RunTask& t) {
  return t.run_id + "_seed" + std::to_string(t.seed) + ".csv";
}

inline std::vector<RunOutcome> execute(const TrainingSetup& setup, std::size_t T, const LrRule& lr,
                                       const std::vector<RunTask>& tasks,
                                       const std::filesystem::path& out_dir, std::size_t jobs) {
  std::vector<RunOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const RunTask& task = tasks[i];
    RunOutcome& o = outcomes[i];
    try {
      RunConfig rc{T, task.spec, lr, task.seed, setup.initial_w};
      const RunSummary s = task.clipped
                               ? run_mcsgd(setup.problem, setup.params, setup.dragger, rc)
                               : run_sgd(setup.problem, setup.params, setup.dragger, rc);
      write_atomically(out_dir / csv_name(task), run_csv(s));
      o.min_grad_norm = s.min_grad_norm;
      o.final_loss = s.final_loss;
      o.lr = s.learning_rate;
    } catch (const DivergenceError& e) {
      o.code = kExitDivergence;
      o.error = "run " + task.run_id + " seed " + std::to_string(task.seed) + ": " + e.what();
    } catch (const std::exception& e) {
      o.code = kExitFailure;
      o.error = "run " + task.run_id + " seed " + std::to_string(task.seed) + ": " + e.what();
    }
  });
  return outcomes;
}

/// Reports every failed run; returns the first failure's code in task order.
inline int report_failures(const std::vector<RunOutcome>& outcomes, std::ostream& err) {
  int code = kExitOk;
  for (const auto& o : outcomes) {
    if (o.code == kExitOk) continue;
    err << "error: " << o.error << '\n';
    if (code == kExitOk) code = o.code;
  }
  return code;
}

inline const std::vector<std::string>& summary_header() {
  static const std::vector<std::string> h{"run_id", "seed", "min_grad_norm", "final_loss", "T",
                                          "b", "B", "epsilon", "sigma", "mode", "lr"};
  return h;
}

inline std::vector<std::string> summary_row(const RunTask& t, const RunOutcome& o, std::size_t T,
                                            const GradientModelParams& params) {
  return {t.run_id,
          std::to_string(t.seed),
          fmt17(o.min_grad_norm),
          fmt17(o.final_loss),
          std::to_string(T),
          std::to_string(t.clipped ? t.spec.micro_batch : t.spec.mini_batch),
          std::to_string(t.spec.mini_batch),
          fmt17(params.epsilon),
          fmt17(params.sigma),
          t.clipped ? mode_name(t.spec.mode) : "none",
          fmt17(o.lr)};
}

inline std::vector<std::uint64_t> seeds_for(const ExperimentConfig& cfg, const CliOptions& opt) {
  if (opt.seeds) return *opt.seeds;
  return cfg.run->seeds;
}

inline std::filesystem::path out_dir_for(const ExperimentConfig& cfg, const CliOptions& opt) {
  return opt.out_dir ? *opt.out_dir : cfg.output_dir;
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline void require_jobs(const CliOptions& opt) {
  if (opt.jobs == 0) throw ConfigError("--jobs must be positive");
  if (opt.seeds && opt.seeds->empty()) throw ConfigError("--seeds must list at least one seed");
}

}  // namespace detail

/// Runs plain and/or clipped SGD for each seed; one CSV per (run, seed) and
/// a summary.csv.
inline int cmd_run(const CliOptions& opt, std::ostream& log, std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require_jobs(opt);
    const ExperimentConfig cfg = load_config(opt.config_path);
    const TrainingSetup setup = build_training(cfg);
    if (!cfg.clip) throw ConfigError("clip: section required");
    const ClipConfig& clip = *cfg.clip;

    std::vector<detail::RunTask> tasks;
    for (const std::string& algo : cfg.run->algorithms) {
      if (algo == "sgd") {
        ClipSpec plain{clip.B, clip.B, AdaptiveMode{}};
        validate_clip_spec(plain);
        for (auto seed : detail::seeds_for(cfg, opt)) tasks.push_back({"sgd", seed, false, plain});
      } else {
        if (!clip.b) throw ConfigError("clip.b: required for mcsgd runs");
        const ClipSpec spec = clip.spec(*clip.b);
        validate_clip_spec(spec);
        const std::string id = "mcsgd_" + mode_name(spec.mode) + "_b" + std::to_string(*clip.b);
        for (auto seed : detail::seeds_for(cfg, opt)) tasks.push_back({id, seed, true, spec});
      }
    }

    const auto out_dir = detail::out_dir_for(cfg, opt);
    const auto outcomes = detail::execute(setup, cfg.run->T, cfg.run->lr, tasks, out_dir, opt.jobs);
    if (int code = detail::report_failures(outcomes, err)) return code;

    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      rows.push_back(detail::summary_row(tasks[i], outcomes[i], cfg.run->T, setup.params));
    }
    write_atomically(out_dir / "summary.csv", csv_table(detail::summary_header(), rows));
    log << setup.problem.description() << '\n' << text_table(detail::summary_header(), rows);
    return static_cast<int>(kExitOk);
  });
}

/// Clipped SGD over a micro-batch grid; sweep.csv holds the per-b table.
inline int cmd_sweep(const CliOptions& opt, std::ostream& log, std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require_jobs(opt);
    const ExperimentConfig cfg = load_config(opt.config_path);
    const TrainingSetup setup = build_training(cfg);
    if (!cfg.clip || cfg.clip->b_grid.empty()) throw ConfigError("clip.b_grid: required for sweep");
    const ClipConfig& clip = *cfg.clip;
    const auto seeds = detail::seeds_for(cfg, opt);

    std::vector<detail::RunTask> tasks;
    for (std::size_t b : clip.b_grid) {
      const ClipSpec spec = clip.spec(b);
      validate_clip_spec(spec);
      for (auto seed : seeds) tasks.push_back({"mcsgd_b" + std::to_string(b), seed, true, spec});
    }

    const auto out_dir = detail::out_dir_for(cfg, opt);
    const auto outcomes = detail::execute(setup, cfg.run->T, cfg.run->lr, tasks, out_dir, opt.jobs);
    if (int code = detail::report_failures(outcomes, err)) return code;

    std::vector<std::vector<std::string>> summary;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      summary.push_back(detail::summary_row(tasks[i], outcomes[i], cfg.run->T, setup.params));
    }
    write_atomically(out_dir / "summary.csv", csv_table(detail::summary_header(), summary));

    const std::vector<std::string> header{"b", "mean_min_grad_norm", "std_min_grad_norm",
                                          "mean_final_loss", "thm2_bias", "thm2_total"};
    std::vector<std::vector<std::string>> rows;
    std::optional<std::size_t> emp_b, theo_b;
    double emp_best = 0.0, theo_best = 0.0;
    const double n = static_cast<double>(seeds.size());
    for (std::size_t k = 0; k < clip.b_grid.size(); ++k) {
      const std::size_t b = clip.b_grid[k];
      double mean = 0.0, loss = 0.0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        mean += outcomes[k * seeds.size() + s].min_grad_norm;
        loss += outcomes[k * seeds.size() + s].final_loss;
      }
      mean /= n;
      loss /= n;
      double ss = 0.0;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const double dlt = outcomes[k * seeds.size() + s].min_grad_norm - mean;
        ss += dlt * dlt;
      }
      const double sd = seeds.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      if (!emp_b || mean < emp_best || (mean == emp_best && b < *emp_b)) {
        emp_b = b;
        emp_best = mean;
      }

      std::string bias_cell = kHypothesisViolated, total_cell = kHypothesisViolated;
      try {
        RateInputs in{cfg.run->T, setup.problem.smoothness_L(), setup.loss_gap,
                      setup.params.sigma, clip.B, b, setup.params.epsilon,
                      setup.dragger.ratio_low_at(static_cast<double>(b)),
                      setup.dragger.ratio_high};
        const Thm2Rate r = thm2_rate(in);
        bias_cell = fmt17(r.bias);
        total_cell = fmt17(r.total);
        if (!theo_b || r.bias < theo_best || (r.bias == theo_best && b < *theo_b)) {
          theo_b = b;
          theo_best = r.bias;
        }
      } catch (const HypothesisError&) {
      }
      rows.push_back({std::to_string(b), fmt17(mean), fmt17(sd), fmt17(loss), bias_cell, total_cell});
    }
    write_atomically(out_dir / "sweep.csv", csv_table(header, rows));
    log << text_table(header, rows);
    log << "empirical argmin b: " << *emp_b << '\n';
    log << "theoretical argmin b (thm2 bias): "
        << (theo_b ? std::to_string(*theo_b) : std::string("none, every row violates hypotheses"))
        << '\n';
    return static_cast<int>(kExitOk);
  });
}

namespace detail {

inline nlohmann::json report_json(const std::string& suite, const McReport& r) {
  return {{"suite", suite},         {"name", r.name},
          {"n_samples", r.n_samples}, {"estimate", r.estimate},
          {"bound_or_reference", r.bound_or_reference},
          {"margin", r.margin},     {"pass", r.pass},
          {"seed", r.seed}};
}

inline Vector alternating(std::size_t d) {
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = i % 2 == 0 ? 1.0 : -1.0;
  return Vector(std::move(v));
}

}  // namespace detail

/// Runs every configured Monte-Carlo suite; verify_report.jsonl has one
/// line per check.
inline int cmd_verify(const CliOptions& opt, std::ostream& log, std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require_jobs(opt);
    const ExperimentConfig cfg = load_config(opt.config_path);
    if (!cfg.verify) throw ConfigError("verify: section required");
    const VerifySection& v = *cfg.verify;
    const std::uint64_t seed = opt.seeds ? opt.seeds->front() : v.seed;
    const McSettings mc{v.partitions, opt.jobs};

    // Each check is planned (and its inputs validated) before anything runs.
    struct Check {
      std::string suite;
      std::function<McReport()> run;
    };
    std::vector<Check> checks;
    if (v.lemma2) {
      for (std::size_t d : v.lemma2->dims) {
        const std::size_t n = v.lemma2->n;
        checks.push_back({"lemma2", [=] { return mc_lemma2(n, d, seed, mc); }});
      }
    }
    auto fixed_spec = [](std::size_t d, double ratio) {
      DraggerSpec s{Vector::unit(d, 1), ratio, ratio, {}};
      s.validate();
      return s;
    };
    if (v.lemma1) {
      const Lemma1Suite l = *v.lemma1;
      for (std::size_t d : l.dim_grid)
        for (double eps : l.epsilon_grid)
          for (double sigma : l.sigma_grid)
            for (std::size_t b : l.b_grid) {
              const GradientModelParams params{eps, sigma, d};
              params.validate();
              const DraggerSpec spec = fixed_spec(d, l.ratio);
              const Vector g = l.g_norm * Vector::unit(d, 0);
              checks.push_back({"lemma1", [=] {
                                  Lemma1Options o;
                                  o.bound_multiplier = l.bound_multiplier;
                                  return mc_lemma1(g, params, spec, b, l.n, seed, mc, o);
                                }});
            }
    }
    if (v.variance) {
      const VarianceSuite l = *v.variance;
      for (std::size_t d : l.dim_grid)
        for (double eps : l.epsilon_grid)
          for (double sigma : l.sigma_grid) {
            const GradientModelParams params{eps, sigma, d};
            params.validate();
            const DraggerSpec spec = fixed_spec(d, l.ratio);
            const Vector g = l.g_norm * Vector::unit(d, 0);
            checks.push_back({"variance", [=] {
                                return mc_variance_identity(g, params, spec, l.n, seed, mc, l.rel_tol);
                              }});
          }
    }
    if (v.cosine) {
      const CosineSuite c = *v.cosine;
      checks.push_back({"cosine", [=] {
                          const Problem p = quadratic_problem(linear_spectrum(c.dim, 0.1, 1.0));
                          const Vector w = Vector::filled(c.dim, 1.0);
                          const double sigma = c.noise_fraction * l2_norm(p.grad(w));
                          const GradientModelParams params{0.5, sigma, c.dim};
                          DraggerSpec spec{detail::alternating(c.dim), c.ratio, c.ratio, {}};
                          const CosineExperiment e = cosine_experiment(p, params, spec, w, c.n_pairs, seed);
                          const double m1 = c.max_abs_dragger_mean - std::abs(e.dragger_benign.mean);
                          const double m2 = e.benign_benign.mean - c.min_benign_mean;
                          return McReport{"cosine_d" + std::to_string(c.dim), 2 * c.n_pairs,
                                          e.dragger_benign.mean, e.benign_benign.mean,
                                          std::min(m1, m2), m1 > 0.0 && m2 > 0.0, seed};
                        }});
    }

    std::string report;
    std::vector<std::string> failing;
    for (const auto& check : checks) {
      const McReport r = check.run();
      report += detail::report_json(check.suite, r).dump() + '\n';
      log << (r.pass ? "PASS " : "FAIL ") << r.name << "  estimate=" << fmt6(r.estimate)
          << "  bound/ref=" << fmt6(r.bound_or_reference) << "  margin=" << fmt6(r.margin) << '\n';
      if (!r.pass) failing.push_back(r.name);
    }
    const auto out_dir = detail::out_dir_for(cfg, opt);
    write_atomically(out_dir / "verify_report.jsonl", report);
    if (!failing.empty()) {
      err << "verification failed in " << failing.size() << " suite(s):";
      for (const auto& f : failing) err << ' ' << f;
      err << '\n';
      return static_cast<int>(kExitVerificationFailure);
    }
    log << "all " << checks.size() << " checks passed\n";
    return static_cast<int>(kExitOk);
  });
}

/// Tabulates every rate and constant over the (T, b, epsilon) grid.
inline int cmd_bounds(const CliOptions& opt, std::ostream& log, std::ostream& err) {
  return detail::guarded(err, [&] {
    detail::require_jobs(opt);
    const ExperimentConfig cfg = load_config(opt.config_path);
    if (!cfg.bounds) throw ConfigError("bounds: section required");
    const BoundsSection& s = *cfg.bounds;

    auto cell = [](const std::function<double()>& f) -> std::string {
      try {
        return fmt17(f());
      } catch (const HypothesisError&) {
        return kHypothesisViolated;
      }
    };
    const std::vector<std::string> header{"T", "b", "epsilon", "thm9", "thm1", "thm2_bias",
                                          "thm2_decaying", "thm2_total", "thm1_Cmax",
                                          "lemma1_bound"};
    std::vector<std::vector<std::string>> rows;
    for (std::size_t T : s.T_grid)
      for (std::size_t b : s.b_grid)
        for (double eps : s.epsilon_grid) {
          const RateInputs in{T, s.L, s.loss_gap, s.sigma, s.B, b, eps, s.c, s.C};
          const double eta = s.eta ? *s.eta : lr_theorem(s.L, T);
          std::string bias = kHypothesisViolated, dec = bias, total = bias;
          try {
            const Thm2Rate r = thm2_rate(in);
            bias = fmt17(r.bias);
            dec = fmt17(r.decaying);
            total = fmt17(r.total);
          } catch (const HypothesisError&) {
          }
          rows.push_back({std::to_string(T), std::to_string(b), fmt17(eps),
                          cell([&] { return thm9_rate(T, s.L, s.loss_gap, s.sigma_b.value_or(s.sigma), s.B); }),
                          cell([&] { return thm1_rate(T, s.L, s.loss_gap, s.sigma, s.B, eps); }),
                          bias, dec, total,
                          cell([&] { return thm1_Cmax(eps, eta, s.L); }),
                          cell([&] { return lemma1_bound(b, eps, s.sigma, s.g_norm, s.mu_norm); })});
        }
    const auto out_dir = detail::out_dir_for(cfg, opt);
    write_atomically(out_dir / "bounds.csv", csv_table(header, rows));
    log << text_table(header, rows);
    return static_cast<int>(kExitOk);
  });
}

}  // namespace mbclip::harness
