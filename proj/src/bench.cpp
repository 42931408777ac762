#include "innodpc/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "innodpc/numerics.hpp"
#include "innodpc/rng.hpp"

namespace innodpc {

ExperimentConfig::ExperimentConfig() : plant(benchmark_plant()) {}

ControllerConfig ExperimentConfig::controller_config() const {
  ControllerConfig c;
  c.q_weight = q_weight;
  c.r_weight = r_weight;
  c.l_p = l_p;
  c.l_f = l_f;
  c.u_lo = u_lo;
  c.u_hi = u_hi;
  c.y_lo = y_lo;
  c.y_hi = y_hi;
  c.lambda_y = lambda_y;
  const int horizon = n_test;
  const Eigen::Index n_y = plant.ny();
  c.reference = [horizon, n_y](int k) {
    const double pi = std::acos(-1.0);
    return Vector::Constant(n_y, std::sin(2.0 * pi * k / horizon));
  };
  return c;
}

double r_squared(const Matrix& y_true, const Matrix& y_pred) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
    throw std::invalid_argument("r_squared: dimension mismatch");
  if (y_true.size() == 0) throw std::invalid_argument("r_squared: empty input");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).square().sum();
  const double ss_res = (y_true - y_pred).squaredNorm();
  if (ss_tot <= 0.0)
    return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

ControlCosts control_costs(const ClosedLoopLog& log, const Matrix& q_weight,
                           const Matrix& r_weight) {
  ControlCosts c;
  for (Eigen::Index k = 0; k < log.u.cols(); ++k) {
    c.j_u += (log.u.col(k).transpose() * r_weight * log.u.col(k)).value();
    const Vector dev = log.y.col(k) - log.r.col(k);
    c.j_y += (dev.transpose() * q_weight * dev).value();
  }
  return c;
}

void parallel_for(int n_tasks, int jobs, const std::function<void(int)>& fn) {
  if (n_tasks <= 0) return;
  const int workers = std::min(std::max(jobs, 1), n_tasks);
  if (workers == 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

namespace {

void check_snr_table(const ExperimentConfig& cfg) {
  if (cfg.q_values.empty() || cfg.q_values.size() != cfg.snr_labels.size())
    throw ConfigError("experiment: q_values and snr_labels must align");
  if (cfg.n_runs < 1) throw ConfigError("experiment: n_runs must be >= 1");
}

// Offline identification record and predictor pipeline shared by the studies:
// square-wave record of rho + n samples, VARX innovation estimate, Hankel
// partition, predictor.
RecordPipeline offline_pipeline(const ExperimentConfig& cfg, double q,
                                std::uint64_t seed) {
  const Matrix u_off =
      gen_square_wave_input(cfg.input_period, cfg.input_amplitude,
                            cfg.input_dither_var, cfg.rho + cfg.n, seed + 0);
  const Trajectory off = simulate(cfg.plant, u_off, NoiseSpec{seed + 1, q},
                                  Vector::Zero(cfg.plant.nx()));
  return build_from_record(off.u, off.y, cfg.rho, cfg.rho, cfg.l_p, cfg.l_f, {},
                           cfg.estimate_d);
}

Trajectory test_record(const ExperimentConfig& cfg, double q,
                       std::uint64_t seed, int length) {
  const Matrix u_test =
      gen_gaussian_input(cfg.test_input_var, length, seed + 2,
                         static_cast<int>(cfg.plant.nu()));
  return simulate(cfg.plant, u_test, NoiseSpec{seed + 3, q},
                  Vector::Zero(cfg.plant.nx()));
}

struct PredictionRunOutput {
  std::vector<PredictionRow> rows;
  std::string exclusion;
};

PredictionRunOutput prediction_run(const ExperimentConfig& cfg, int snr_idx,
                                   int run) {
  PredictionRunOutput out;
  const double q = cfg.q_values[snr_idx];
  const std::string& label = cfg.snr_labels[snr_idx];
  try {
    const std::uint64_t seed =
        run_seed(cfg.base_seed, static_cast<std::uint64_t>(run));
    const RecordPipeline pipe = offline_pipeline(cfg, q, seed);
    const SpcPredictor spc = build_spc_predictor(pipe.blocks);
    const Trajectory test = test_record(cfg, q, seed, cfg.n_test);

    const int n_inst = cfg.n_test - cfg.l_f - cfg.l_p + 1;
    const Eigen::Index n_y = cfg.plant.ny();
    const std::array<int, 3> steps{1, 5, 10};

    // Innovation predictor: receding windows over the test record.
    OnlineState s0;
    s0.u_p = stack_window(test.u, cfg.l_p, cfg.l_p);
    s0.y_p = stack_window(test.y, cfg.l_p, cfg.l_p);
    s0.e_p = init_innovation_window(pipe.blocks, s0.u_p, s0.y_p).e_p0;
    s0.t = cfg.l_p;
    const OpenLoopLog inno_log =
        run_open_loop(pipe.predictor, s0, test.u, test.y, cfg.l_p, n_inst);

    // SPC baseline on the identical windows.
    Matrix spc_preds(n_y * cfg.l_f, n_inst);
    {
      OnlineState s = s0;
      s.e_p = Vector::Zero(n_y * cfg.l_p);
      for (int j = 0; j < n_inst; ++j) {
        const int t = cfg.l_p + j;
        const Vector u_f = stack_window(test.u, t + cfg.l_f, cfg.l_f);
        const PredictionResult pr = predict_spc(spc, s.u_p, s.y_p, u_f);
        spc_preds.col(j) = pr.y_f_hat;
        s = update_window(s, test.u.col(t), test.y.col(t), pr.one_step);
      }
    }

    // Model-based oracle: steady-state Kalman filter along the record.
    Matrix sskf_preds(n_y * cfg.l_f, n_inst);
    {
      const FilterResult filt = sskf_filter(cfg.plant, test.u, test.y,
                                            Vector::Zero(cfg.plant.nx()));
      for (int j = 0; j < n_inst; ++j) {
        const int t = cfg.l_p + j;
        const Vector u_f = stack_window(test.u, t + cfg.l_f, cfg.l_f);
        sskf_preds.col(j) = sskf_predict(cfg.plant, filt.x_hat.col(t), u_f);
      }
    }

    std::array<Matrix, 3> truth, p_inno, p_spc, p_sskf;
    for (auto* group : {&truth, &p_inno, &p_spc, &p_sskf})
      for (auto& m : *group) m.resize(n_y, n_inst);
    for (std::size_t si = 0; si < steps.size(); ++si) {
      const int st = steps[si];
      for (int j = 0; j < n_inst; ++j) {
        const int t = cfg.l_p + j;
        truth[si].col(j) = test.y.col(t + st - 1);
        p_inno[si].col(j) = inno_log.predictions.col(j).segment((st - 1) * n_y, n_y);
        p_spc[si].col(j) = spc_preds.col(j).segment((st - 1) * n_y, n_y);
        p_sskf[si].col(j) = sskf_preds.col(j).segment((st - 1) * n_y, n_y);
      }
    }

    auto make_row = [&](const std::string& method,
                        const std::array<Matrix, 3>& preds, double radius) {
      PredictionRow row;
      row.snr = label;
      row.run = run;
      row.method = method;
      row.r2_step1 = r_squared(truth[0], preds[0]);
      row.r2_step5 = r_squared(truth[1], preds[1]);
      row.r2_step10 = r_squared(truth[2], preds[2]);
      row.theta_radius = radius;
      return row;
    };
    out.rows.push_back(make_row("sskf", p_sskf, 0.0));
    out.rows.push_back(make_row("inno", p_inno, pipe.predictor.theta_radius));
    out.rows.push_back(make_row("spc", p_spc, 0.0));
  } catch (const std::exception& ex) {
    out.exclusion = label + "," + std::to_string(run) + "," + ex.what();
  }
  return out;
}

struct ControlRunOutput {
  std::vector<ControlRow> rows;
  std::string exclusion;
};

ControlRunOutput control_run(const ExperimentConfig& cfg, int snr_idx, int run,
                             double lambda_sel) {
  ControlRunOutput out;
  const double q = cfg.q_values[snr_idx];
  const std::string& label = cfg.snr_labels[snr_idx];
  try {
    const std::uint64_t seed =
        run_seed(cfg.base_seed, static_cast<std::uint64_t>(run));
    const RecordPipeline pipe = offline_pipeline(cfg, q, seed);
    const SpcPredictor spc = build_spc_predictor(pipe.blocks);
    const ControllerConfig base = cfg.controller_config();

    auto run_one = [&](ControllerKind kind, const RegDeepcController* reg,
                       const ControllerConfig& c) {
      ControllerSetup setup;
      setup.kind = kind;
      setup.model = &cfg.plant;
      setup.inno = &pipe.predictor;
      setup.spc = &spc;
      setup.reg = reg;
      return run_closed_loop(setup, cfg.plant, q, c, cfg.n_test, seed);
    };
    auto push_row = [&](const std::string& method, const ClosedLoopLog& log,
                        double radius) {
      const ControlCosts costs = control_costs(log, cfg.q_weight, cfg.r_weight);
      ControlRow row;
      row.snr = label;
      row.run = run;
      row.method = method;
      row.j_u = costs.j_u;
      row.j_y = costs.j_y;
      row.j_total = costs.total();
      row.theta_radius = radius;
      row.solver_failures = log.solver_failures;
      row.slack_steps = log.slack_steps;
      out.rows.push_back(row);
    };

    push_row("sskf", run_one(ControllerKind::sskf_mpc, nullptr, base), 0.0);
    push_row("inno", run_one(ControllerKind::inno_deepc, nullptr, base),
             pipe.predictor.theta_radius);
    const ClosedLoopLog spc_log = run_one(ControllerKind::spc, nullptr, base);
    push_row("spc", spc_log, 0.0);
    if (std::isinf(lambda_sel)) {
      // Saturation endpoint delegates to the exact SPC solve path, so the
      // paired run is reused verbatim.
      push_row("reg", spc_log, 0.0);
    } else {
      ControllerConfig c = base;
      c.lambda = lambda_sel;
      const RegDeepcController reg = build_reg_deepc(pipe.blocks, c);
      push_row("reg", run_one(ControllerKind::reg_deepc, &reg, c), 0.0);
    }
  } catch (const std::exception& ex) {
    out.exclusion = label + "," + std::to_string(run) + "," + ex.what();
  }
  return out;
}

// Pick the regularization weight on a held-out validation record: one closed
// loop per grid point, smallest total cost wins, ties within a relative 1e-6
// band resolve toward the saturation endpoint.
double select_lambda(const ExperimentConfig& cfg, double q) {
  const int n_val = std::max(1, cfg.n_validation_runs);
  std::vector<RecordPipeline> pipes;
  std::vector<SpcPredictor> spcs;
  std::vector<std::uint64_t> seeds;
  pipes.reserve(n_val);
  for (int i = 0; i < n_val; ++i) {
    const std::uint64_t seed = run_seed(
        cfg.base_seed, static_cast<std::uint64_t>(cfg.n_runs) + 777 + i);
    seeds.push_back(seed);
    pipes.push_back(offline_pipeline(cfg, q, seed));
    spcs.push_back(build_spc_predictor(pipes.back().blocks));
  }
  const ControllerConfig base = cfg.controller_config();
  const double inf = std::numeric_limits<double>::infinity();

  const bool grid_has_inf =
      std::any_of(cfg.lambda_grid.begin(), cfg.lambda_grid.end(),
                  [](double v) { return std::isinf(v); });
  std::vector<double> inf_costs(n_val, 0.0);
  if (grid_has_inf) {
    for (int i = 0; i < n_val; ++i) {
      ControllerSetup setup;
      setup.kind = ControllerKind::spc;
      setup.spc = &spcs[i];
      const ClosedLoopLog log =
          run_closed_loop(setup, cfg.plant, q, base, cfg.n_test, seeds[i]);
      inf_costs[i] =
          control_costs(log, cfg.q_weight, cfg.r_weight).total();
    }
  }

  double best_cost = inf, best_lambda = inf, best_diff = 0.0,
         best_diff_sd = 0.0;
  for (double lam : cfg.lambda_grid) {
    if (std::isinf(lam)) continue;
    double cost = 0.0;
    std::vector<double> diffs(n_val, 0.0);
    for (int i = 0; i < n_val; ++i) {
      ControllerConfig c = base;
      c.lambda = lam;
      const RegDeepcController reg = build_reg_deepc(pipes[i].blocks, c);
      ControllerSetup setup;
      setup.kind = ControllerKind::reg_deepc;
      setup.reg = &reg;
      const ClosedLoopLog log =
          run_closed_loop(setup, cfg.plant, q, c, cfg.n_test, seeds[i]);
      const double j = control_costs(log, cfg.q_weight, cfg.r_weight).total();
      cost += j;
      diffs[i] = j - inf_costs[i];
    }
    cost /= n_val;
    if (cost < best_cost) {
      best_cost = cost;
      best_lambda = lam;
      double m = 0.0;
      for (double d : diffs) m += d;
      m /= n_val;
      double s2 = 0.0;
      for (double d : diffs) s2 += (d - m) * (d - m);
      best_diff = m;
      best_diff_sd = n_val > 1 ? std::sqrt(s2 / (n_val - 1)) : 0.0;
    }
  }
  if (!grid_has_inf) return best_lambda;
  if (!std::isfinite(best_cost)) return inf;

  // The infinite endpoint is hyperparameter-free and delegates to the exact
  // subspace solve, so commit to a finite weight only when the paired per-run
  // validation improvement is both large (relative margin) and statistically
  // clear; closed-loop costs are heavy-tailed and a lucky validation batch
  // must not hand the study a weight that hurts on average.
  constexpr double kSignificance = 2.0;
  double inf_mean = 0.0;
  for (double v : inf_costs) inf_mean += v;
  inf_mean /= n_val;
  const double needed =
      std::max(cfg.lambda_margin * inf_mean,
               kSignificance * best_diff_sd / std::sqrt(double(n_val)));
  if (best_diff < 0.0 && -best_diff > needed) return best_lambda;
  return inf;
}

}  // namespace

PredictionStudyResult run_prediction_study(const ExperimentConfig& cfg) {
  check_snr_table(cfg);
  if (cfg.n_test < cfg.l_p + cfg.l_f)
    throw ConfigError("experiment: n_test shorter than l_p + l_f");
  PredictionStudyResult res;
  for (std::size_t si = 0; si < cfg.q_values.size(); ++si) {
    std::vector<PredictionRunOutput> slots(cfg.n_runs);
    parallel_for(cfg.n_runs, cfg.jobs, [&](int r) {
      slots[r] = prediction_run(cfg, static_cast<int>(si), r);
    });
    for (auto& slot : slots) {
      for (auto& row : slot.rows) res.rows.push_back(std::move(row));
      if (!slot.exclusion.empty()) res.exclusions.push_back(slot.exclusion);
    }
  }
  return res;
}

ControlStudyResult run_control_study(const ExperimentConfig& cfg) {
  check_snr_table(cfg);
  ControlStudyResult res;
  for (std::size_t si = 0; si < cfg.q_values.size(); ++si) {
    const double lam = select_lambda(cfg, cfg.q_values[si]);
    res.selected_lambda[cfg.snr_labels[si]] = lam;
    std::vector<ControlRunOutput> slots(cfg.n_runs);
    parallel_for(cfg.n_runs, cfg.jobs, [&](int r) {
      slots[r] = control_run(cfg, static_cast<int>(si), r, lam);
    });
    for (auto& slot : slots) {
      for (auto& row : slot.rows) res.rows.push_back(std::move(row));
      if (!slot.exclusion.empty()) res.exclusions.push_back(slot.exclusion);
    }
  }
  return res;
}

DemoResult run_stability_demo(const ExperimentConfig& cfg) {
  if (cfg.rho_sweep.size() < 2)
    throw ConfigError("stability demo: need two candidate orders");
  const auto [lo_it, hi_it] =
      std::minmax_element(cfg.rho_sweep.begin(), cfg.rho_sweep.end());
  const int rho_lo = *lo_it, rho_hi = *hi_it;
  if (rho_lo == rho_hi)
    throw ConfigError("stability demo: candidate orders must differ");

  const double q = cfg.demo_q;
  const Vector x0 = Vector::Zero(cfg.plant.nx());
  const int trace_len = cfg.l_p + cfg.demo_stable_steps + cfg.l_f;
  constexpr double kSlopeLimit = 1e-3;      // log10 units per instant
  constexpr double kDivergenceFloor = 1e3;  // max |e_hat| over |e_hat(0)|

  for (int attempt = 0; attempt < cfg.demo_seed_budget; ++attempt) {
    const std::uint64_t seed =
        run_seed(cfg.base_seed, 10000 + static_cast<std::uint64_t>(attempt));
    try {
      // One shared record; each candidate order carves the same presample so
      // the comparison differs only in the regression order.
      const Matrix u_off =
          gen_square_wave_input(cfg.input_period, cfg.input_amplitude,
                                cfg.input_dither_var, cfg.n, seed + 0);
      const Trajectory off =
          simulate(cfg.plant, u_off, NoiseSpec{seed + 1, q}, x0);
      const RecordPipeline lo = build_from_record(
          off.u, off.y, rho_lo, rho_hi, cfg.l_p, cfg.l_f, {}, cfg.estimate_d);
      const RecordPipeline hi = build_from_record(
          off.u, off.y, rho_hi, rho_hi, cfg.l_p, cfg.l_f, {}, cfg.estimate_d);
      if (!(lo.predictor.theta_radius < 1.0 && hi.predictor.theta_radius > 1.0))
        continue;

      const Trajectory test = test_record(cfg, q, seed, trace_len);
      auto open_loop = [&](const RecordPipeline& pipe, int n_inst) {
        OnlineState s;
        s.u_p = stack_window(test.u, cfg.l_p, cfg.l_p);
        s.y_p = stack_window(test.y, cfg.l_p, cfg.l_p);
        s.e_p = init_innovation_window(pipe.blocks, s.u_p, s.y_p).e_p0;
        s.t = cfg.l_p;
        return run_open_loop(pipe.predictor, s, test.u, test.y, cfg.l_p, n_inst);
      };
      const OpenLoopLog stable_log = open_loop(lo, cfg.demo_stable_steps);
      const OpenLoopLog unstable_log = open_loop(hi, cfg.demo_unstable_window);

      // Trend of log10 |e_hat| on the stable trace.
      const int n_s = cfg.demo_stable_steps;
      double slope = 0.0;
      {
        double sum_t = 0, sum_z = 0, sum_tt = 0, sum_tz = 0;
        for (int j = 0; j < n_s; ++j) {
          const double z = std::log10(
              std::max(stable_log.e_hat.col(j).norm(), 1e-300));
          sum_t += j;
          sum_z += z;
          sum_tt += static_cast<double>(j) * j;
          sum_tz += j * z;
        }
        slope = (n_s * sum_tz - sum_t * sum_z) / (n_s * sum_tt - sum_t * sum_t);
      }

      double peak = 0.0;
      for (Eigen::Index j = 0; j < unstable_log.e_hat.cols(); ++j)
        peak = std::max(peak, unstable_log.e_hat.col(j).norm());
      const double e0 = unstable_log.e_hat.col(0).norm();
      const double ratio =
          e0 > 0.0 ? peak / e0 : std::numeric_limits<double>::infinity();

      if (slope <= kSlopeLimit && ratio >= kDivergenceFloor) {
        DemoResult res;
        res.seed = seed;
        res.rho_stable = rho_lo;
        res.rho_unstable = rho_hi;
        res.radius_stable = lo.predictor.theta_radius;
        res.radius_unstable = hi.predictor.theta_radius;
        res.stable_slope = slope;
        res.divergence_ratio = ratio;
        res.stable_trace = stable_log.e_hat;
        res.unstable_trace = unstable_log.e_hat;
        res.seeds_tried = attempt + 1;
        return res;
      }
    } catch (const std::exception&) {
      // This record could not support both fits; move to the next seed.
      continue;
    }
  }
  throw CertificateError(
      "stability demo: seed budget exhausted without a stable/unstable pair");
}

}  // namespace innodpc
