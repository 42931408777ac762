#include "innodpc/control.hpp"

#include <cmath>

#include "innodpc/numerics.hpp"
#include "innodpc/rng.hpp"

namespace innodpc {

namespace {

Matrix kron_identity(const Matrix& w, int l) {
  Matrix big = Matrix::Zero(w.rows() * l, w.cols() * l);
  for (int i = 0; i < l; ++i)
    big.block(i * w.rows(), i * w.cols(), w.rows(), w.cols()) = w;
  return big;
}

Vector repeat_vector(const Vector& v, int l) {
  Vector big(v.size() * l);
  for (int i = 0; i < l; ++i) big.segment(i * v.size(), v.size()) = v;
  return big;
}

Vector stack_reference(const ControllerConfig& cfg, int t) {
  const Eigen::Index n_y = cfg.q_weight.rows();
  Vector r(n_y * cfg.l_f);
  for (int j = 0; j < cfg.l_f; ++j) r.segment(j * n_y, n_y) = cfg.reference(t + j);
  return r;
}

// Relax the predicted-output rows of a strict tracking QP with quadratic
// slacks. The strict problem must be laid out as [input rows; y-upper rows;
// y-lower rows]. Slacks are rescaled so their Hessian block is the identity
// (the raw penalty would make the problem needlessly ill-conditioned), and
// rows that can never bind are left out: s >= 0 holds at every KKT point
// because the slack gradient is a nonnegative multiple of the multipliers,
// and a zero output row (pure-delay first outputs) keeps only the tighter
// side of its box since both sides share the same normal.
QpProblem soft_relaxation(const QpProblem& strict, Eigen::Index nu_rows,
                          Eigen::Index ny_f, double penalty) {
  const Eigen::Index nz = strict.h_mat.rows();
  const double sc = 1.0 / std::sqrt(penalty);
  QpProblem soft;
  soft.h_mat = Matrix::Zero(nz + ny_f, nz + ny_f);
  soft.h_mat.topLeftCorner(nz, nz) = strict.h_mat;
  soft.h_mat.bottomRightCorner(ny_f, ny_f) = Matrix::Identity(ny_f, ny_f);
  soft.f = Vector::Zero(nz + ny_f);
  soft.f.head(nz) = strict.f;
  soft.g = Matrix::Zero(nu_rows + 2 * ny_f, nz + ny_f);
  soft.h_vec.resize(nu_rows + 2 * ny_f);
  soft.g.block(0, 0, nu_rows, nz) = strict.g.topRows(nu_rows);
  soft.h_vec.head(nu_rows) = strict.h_vec.head(nu_rows);
  Eigen::Index r = nu_rows;
  for (Eigen::Index i = 0; i < ny_f; ++i) {
    const auto up = strict.g.row(nu_rows + i);
    const auto lo = strict.g.row(nu_rows + ny_f + i);
    const double h_up = strict.h_vec[nu_rows + i];
    const double h_lo = strict.h_vec[nu_rows + ny_f + i];
    if (up.cwiseAbs().maxCoeff() <= 1e-12) {
      soft.g(r, nz + i) = -sc;
      soft.h_vec[r++] = std::min(h_up, h_lo);
      continue;
    }
    soft.g.block(r, 0, 1, nz) = up;
    soft.g(r, nz + i) = -sc;
    soft.h_vec[r++] = h_up;
    soft.g.block(r, 0, 1, nz) = lo;
    soft.g(r, nz + i) = -sc;
    soft.h_vec[r++] = h_lo;
  }
  soft.g.conservativeResize(r, Eigen::NoChange);
  soft.h_vec.conservativeResize(r);
  return soft;
}

// Solve the tracking QP; when the box-constrained problem cannot be
// certified optimal (infeasible, or the solver gave up), retry with
// quadratic slacks on the predicted-output rows.
StepResult solve_tracking(const AffineMap& map, const Vector& r_vec,
                          const ControllerConfig& cfg) {
  const QpProblem qp = tracking_qp(map, r_vec, cfg);
  QpResult res = solve_qp(qp, cfg.qp_tol, cfg.qp_max_iter);
  StepResult out;
  out.status = res.status;
  out.iterations = res.iterations;
  if (res.status != QpStatus::optimal) {
    const Eigen::Index nu_f = qp.h_mat.rows();
    const Eigen::Index ny_f = map.gamma.rows();
    const QpProblem soft =
        soft_relaxation(qp, 2 * nu_f, ny_f, cfg.slack_penalty);
    res = solve_qp(soft, cfg.qp_tol, cfg.qp_max_iter);
    out.used_slack = true;
    out.status = res.status;
    out.iterations += res.iterations;
    out.u_f = res.z.head(nu_f);
  } else {
    out.u_f = res.z;
  }
  if (out.u_f.size() > 0) out.y_f_hat = map.gamma * out.u_f + map.b;
  return out;
}

}  // namespace

AffineMap affine_map(const InnoPredictor& pred, const OnlineState& s) {
  const Eigen::Index nu_p = pred.n_u() * pred.l_p();
  const Eigen::Index nu_f = pred.n_u() * pred.l_f();
  AffineMap map;
  const Matrix read = pred.y_f_ef_perp * pred.stacked_pinv;
  map.gamma = read.middleCols(nu_p, nu_f);
  Vector w0(pred.stacked_pinv.cols());
  w0 << s.u_p, Vector::Zero(nu_f), s.y_p, s.e_p;
  map.b = read * w0;
  return map;
}

AffineMap affine_map(const SpcPredictor& spc, const Vector& u_p,
                     const Vector& y_p) {
  const Eigen::Index nu_p = spc.n_u * spc.l_p;
  const Eigen::Index nu_f = spc.n_u * spc.l_f;
  AffineMap map;
  const Matrix read = spc.y_f * spc.stacked_pinv;
  map.gamma = read.middleCols(nu_p, nu_f);
  Vector w0(spc.stacked_pinv.cols());
  w0 << u_p, Vector::Zero(nu_f), y_p;
  map.b = read * w0;
  return map;
}

AffineMap affine_map(const StateSpaceModel& model, const Vector& x_hat,
                     int l_f) {
  AffineMap map;
  map.gamma = impulse_toeplitz(model, l_f);
  map.b = extended_observability(model, l_f) * x_hat;
  return map;
}

QpProblem tracking_qp(const AffineMap& map, const Vector& r_vec,
                      const ControllerConfig& cfg) {
  const Matrix q_bar = kron_identity(cfg.q_weight, cfg.l_f);
  const Matrix r_bar = kron_identity(cfg.r_weight, cfg.l_f);
  const Eigen::Index nu_f = map.gamma.cols();
  const Eigen::Index ny_f = map.gamma.rows();
  QpProblem qp;
  qp.h_mat = map.gamma.transpose() * q_bar * map.gamma + r_bar;
  qp.f = 2.0 * map.gamma.transpose() * q_bar * (map.b - r_vec);
  qp.g.resize(2 * nu_f + 2 * ny_f, nu_f);
  qp.h_vec.resize(2 * nu_f + 2 * ny_f);
  qp.g << Matrix::Identity(nu_f, nu_f), -Matrix::Identity(nu_f, nu_f),
      map.gamma, -map.gamma;
  qp.h_vec << repeat_vector(cfg.u_hi, cfg.l_f), -repeat_vector(cfg.u_lo, cfg.l_f),
      repeat_vector(cfg.y_hi, cfg.l_f) - map.b,
      map.b - repeat_vector(cfg.y_lo, cfg.l_f);
  return qp;
}

StepResult inno_deepc_step(const InnoPredictor& pred, const OnlineState& s,
                           const ControllerConfig& cfg, int t) {
  return solve_tracking(affine_map(pred, s), stack_reference(cfg, t), cfg);
}

StepResult spc_step(const SpcPredictor& spc, const Vector& u_p,
                    const Vector& y_p, const ControllerConfig& cfg, int t) {
  return solve_tracking(affine_map(spc, u_p, y_p), stack_reference(cfg, t), cfg);
}

StepResult sskf_mpc_step(const StateSpaceModel& model, const Vector& x_hat,
                         const ControllerConfig& cfg, int t) {
  return solve_tracking(affine_map(model, x_hat, cfg.l_f),
                        stack_reference(cfg, t), cfg);
}

RegDeepcController build_reg_deepc(const HankelBlocks& blocks,
                                   const ControllerConfig& cfg) {
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0)
    throw std::invalid_argument("build_reg_deepc: lambda must be finite and >= 0");
  RegDeepcController reg;
  reg.u_f = blocks.u_f;
  reg.y_f = blocks.y_f;
  reg.y_p = blocks.y_p;
  reg.l_f = blocks.l_f;
  reg.n_u = blocks.n_u;
  reg.n_y = blocks.n_y;
  reg.m = blocks.m;
  reg.null_up = null_space_basis(blocks.u_p);
  reg.up_pinv = pinv(blocks.u_p);

  Matrix stack(blocks.u_p.rows() + blocks.u_f.rows() + blocks.y_p.rows(),
               blocks.m);
  stack << blocks.u_p, blocks.u_f, blocks.y_p;
  const Matrix pi = pinv(stack) * stack;

  const Matrix q_bar = kron_identity(cfg.q_weight, blocks.l_f);
  const Matrix r_bar = kron_identity(cfg.r_weight, blocks.l_f);
  reg.w = reg.y_f.transpose() * q_bar * reg.y_f +
          reg.u_f.transpose() * r_bar * reg.u_f +
          cfg.lambda_y * reg.y_p.transpose() * reg.y_p +
          cfg.lambda * (Matrix::Identity(blocks.m, blocks.m) - pi);
  reg.h_z = reg.null_up.transpose() * reg.w * reg.null_up;
  reg.u_f_n = reg.u_f * reg.null_up;
  reg.y_f_n = reg.y_f * reg.null_up;
  reg.y_p_n = reg.y_p * reg.null_up;
  return reg;
}

StepResult reg_deepc_step(const RegDeepcController& reg, const Vector& u_p,
                          const Vector& y_p, const ControllerConfig& cfg,
                          int t) {
  const Vector r_vec = stack_reference(cfg, t);
  const Matrix q_bar = kron_identity(cfg.q_weight, reg.l_f);
  const Vector g0 = reg.up_pinv * u_p;

  QpProblem qp;
  qp.h_mat = reg.h_z;
  qp.f = 2.0 * reg.null_up.transpose() *
         (reg.w * g0 - reg.y_f.transpose() * q_bar * r_vec -
          cfg.lambda_y * reg.y_p.transpose() * y_p);
  const Eigen::Index nu_f = reg.u_f.rows();
  const Eigen::Index ny_f = reg.y_f.rows();
  const Vector uf0 = reg.u_f * g0;
  const Vector yf0 = reg.y_f * g0;
  qp.g.resize(2 * nu_f + 2 * ny_f, reg.h_z.cols());
  qp.h_vec.resize(2 * nu_f + 2 * ny_f);
  qp.g << reg.u_f_n, -reg.u_f_n, reg.y_f_n, -reg.y_f_n;
  qp.h_vec << repeat_vector(cfg.u_hi, reg.l_f) - uf0,
      uf0 - repeat_vector(cfg.u_lo, reg.l_f),
      repeat_vector(cfg.y_hi, reg.l_f) - yf0,
      yf0 - repeat_vector(cfg.y_lo, reg.l_f);

  QpResult res = solve_qp(qp, cfg.qp_tol, cfg.qp_max_iter);
  StepResult out;
  out.status = res.status;
  out.iterations = res.iterations;
  if (res.status != QpStatus::optimal) {
    // Quadratic slacks on the predicted-output rows.
    const QpProblem soft =
        soft_relaxation(qp, 2 * nu_f, ny_f, cfg.slack_penalty);
    res = solve_qp(soft, cfg.qp_tol, cfg.qp_max_iter);
    out.used_slack = true;
    out.status = res.status;
    out.iterations += res.iterations;
  }
  const Vector z = res.z.head(reg.h_z.cols());
  out.g = g0 + reg.null_up * z;
  out.u_f = reg.u_f * out.g;
  out.y_f_hat = reg.y_f * out.g;
  return out;
}

ClosedLoopLog run_closed_loop(const ControllerSetup& ctrl,
                              const StateSpaceModel& plant, double q,
                              const ControllerConfig& cfg, int n_test,
                              std::uint64_t seed) {
  if (!cfg.reference) throw ConfigError("run_closed_loop: reference missing");
  const Eigen::Index n_u = plant.nu(), n_y = plant.ny(), n_x = plant.nx();
  Rng noise_rng(seed + 4);
  Rng warmup_rng(seed + 5);
  const Matrix lw = [&] {
    Eigen::LLT<Matrix> llt(q * plant.sigma_w);
    return llt.info() == Eigen::Success ? Matrix(llt.matrixL())
                                        : Matrix(Matrix::Zero(n_x, n_x));
  }();
  const Matrix lv = [&] {
    Eigen::LLT<Matrix> llt(q * plant.sigma_v);
    return llt.info() == Eigen::Success ? Matrix(llt.matrixL())
                                        : Matrix(Matrix::Zero(n_y, n_y));
  }();

  Vector x = Vector::Zero(n_x);
  auto plant_step = [&](const Vector& u_t) {
    const Vector v = q > 0.0 ? Vector(lv * noise_rng.gaussian_vector(n_y))
                             : Vector(Vector::Zero(n_y));
    const Vector w = q > 0.0 ? Vector(lw * noise_rng.gaussian_vector(n_x))
                             : Vector(Vector::Zero(n_x));
    const Vector y_t = plant.c * x + plant.d * u_t + v;
    x = plant.a * x + plant.b * u_t + w;
    return y_t;
  };

  // Warmup: fill the data windows with unit-variance Gaussian excitation.
  Matrix u_warm(n_u, cfg.l_p), y_warm(n_y, cfg.l_p);
  for (int t = 0; t < cfg.l_p; ++t) {
    const Vector u_t = warmup_rng.gaussian_vector(n_u);
    u_warm.col(t) = u_t;
    y_warm.col(t) = plant_step(u_t);
  }

  OnlineState s;
  s.u_p = stack_window(u_warm, cfg.l_p, cfg.l_p);
  s.y_p = stack_window(y_warm, cfg.l_p, cfg.l_p);
  s.e_p = Vector::Zero(n_y * cfg.l_p);
  Vector x_hat = Vector::Zero(n_x);
  switch (ctrl.kind) {
    case ControllerKind::inno_deepc:
      s.e_p = init_innovation_window(ctrl.inno->blocks, s.u_p, s.y_p).e_p0;
      break;
    case ControllerKind::sskf_mpc:
      for (int t = 0; t < cfg.l_p; ++t)
        sskf_step(*ctrl.model, x_hat, u_warm.col(t), y_warm.col(t));
      break;
    default:
      break;
  }

  ClosedLoopLog log;
  log.u.resize(n_u, n_test);
  log.y.resize(n_y, n_test);
  log.r.resize(n_y, n_test);
  log.y_hat_one.resize(n_y, n_test);
  log.status.reserve(n_test);
  log.qp_iterations.reserve(n_test);

  Vector u_prev = Vector::Zero(n_u);
  for (int k = 1; k <= n_test; ++k) {
    StepResult step;
    switch (ctrl.kind) {
      case ControllerKind::sskf_mpc:
        step = sskf_mpc_step(*ctrl.model, x_hat, cfg, k);
        break;
      case ControllerKind::inno_deepc:
        step = inno_deepc_step(*ctrl.inno, s, cfg, k);
        break;
      case ControllerKind::spc:
        step = spc_step(*ctrl.spc, s.u_p, s.y_p, cfg, k);
        break;
      case ControllerKind::reg_deepc:
        step = reg_deepc_step(*ctrl.reg, s.u_p, s.y_p, cfg, k);
        break;
    }
    const bool failed = step.status != QpStatus::optimal;
    if (failed) ++log.solver_failures;
    if (step.used_slack) ++log.slack_steps;

    Vector u_t;
    Vector u_f_applied;
    if (!failed && step.u_f.size() == n_u * cfg.l_f) {
      u_f_applied = step.u_f;
    } else {
      // Hold the previous input; pad the hypothetical future with it too.
      u_f_applied = repeat_vector(u_prev, cfg.l_f);
    }
    u_t = u_f_applied.head(n_u).cwiseMax(cfg.u_lo).cwiseMin(cfg.u_hi);
    u_f_applied.head(n_u) = u_t;

    // One-step prediction under the actually applied input (for logging and
    // the innovation-window update).
    Vector y_hat1(n_y);
    switch (ctrl.kind) {
      case ControllerKind::sskf_mpc:
        y_hat1 = sskf_predict(*ctrl.model, x_hat, u_f_applied).head(n_y);
        break;
      case ControllerKind::inno_deepc:
        y_hat1 = predict(*ctrl.inno, s, u_f_applied).one_step;
        break;
      case ControllerKind::spc:
        y_hat1 = predict_spc(*ctrl.spc, s.u_p, s.y_p, u_f_applied).one_step;
        break;
      case ControllerKind::reg_deepc: {
        // Readout under the solved coefficients with the applied first input:
        // reuse the step prediction, first block only.
        y_hat1 = step.y_f_hat.size() ? Vector(step.y_f_hat.head(n_y))
                                     : Vector(Vector::Zero(n_y));
        break;
      }
    }

    const Vector y_t = plant_step(u_t);
    log.u.col(k - 1) = u_t;
    log.y.col(k - 1) = y_t;
    log.r.col(k - 1) = cfg.reference(k);
    log.y_hat_one.col(k - 1) = y_hat1;
    log.status.push_back(step.status);
    log.qp_iterations.push_back(step.iterations);

    s = update_window(s, u_t, y_t, y_hat1);
    if (ctrl.kind == ControllerKind::sskf_mpc)
      sskf_step(*ctrl.model, x_hat, u_t, y_t);
    u_prev = u_t;
  }
  return log;
}

}  // namespace innodpc
