#include "innodpc/predictor.hpp"

#include <cmath>
#include <string>

#include "innodpc/numerics.hpp"

namespace innodpc {

namespace {

// Stacked data vector col(u_p, u_f, y_p, e_p) the reduced system is solved
// against.
Vector stack_rhs(const Vector& u_p, const Vector& u_f, const Vector& y_p,
                 const Vector& e_p) {
  Vector w(u_p.size() + u_f.size() + y_p.size() + e_p.size());
  w << u_p, u_f, y_p, e_p;
  return w;
}

}  // namespace

InnoPredictor build_inno_predictor(const HankelBlocks& blocks,
                                   const PredictorOptions& opts) {
  if (!blocks.has_e())
    throw std::invalid_argument("build_inno_predictor: innovation blocks missing");
  const Eigen::Index n_u = blocks.n_u, n_y = blocks.n_y;
  const int l_p = blocks.l_p, l_f = blocks.l_f;
  const Eigen::Index m = blocks.m;
  const Matrix& e_f = *blocks.e_f;
  const Matrix& e_p = *blocks.e_p;

  InnoPredictor pred;
  pred.blocks = blocks;

  const SvdFactors ef_svd = svd_factors(e_f, opts.rank_tol);
  pred.ef_sigma_min = ef_svd.sigma.size() ? ef_svd.sigma[ef_svd.sigma.size() - 1] : 0.0;
  if (opts.require_full_rank_ef && ef_svd.rank < e_f.rows())
    throw CertificateError(
        "build_inno_predictor: E_f is not full row rank (rank " +
        std::to_string(ef_svd.rank) + " of " + std::to_string(e_f.rows()) +
        ", sigma_min " + std::to_string(pred.ef_sigma_min) + ")");
  if (m - n_y * l_f < 1)
    throw DataLengthError("build_inno_predictor: too few Hankel columns");

  pred.ef_perp = null_space_basis(e_f, opts.rank_tol);

  // Reduced equality system col(U_p, U_f, Y_p, E_p) * ef_perp.
  const Eigen::Index rows = n_u * (l_p + l_f) + 2 * n_y * l_p;
  Matrix stack(rows, pred.ef_perp.cols());
  Eigen::Index r = 0;
  stack.middleRows(r, n_u * l_p) = blocks.u_p * pred.ef_perp;
  r += n_u * l_p;
  stack.middleRows(r, n_u * l_f) = blocks.u_f * pred.ef_perp;
  r += n_u * l_f;
  stack.middleRows(r, n_y * l_p) = blocks.y_p * pred.ef_perp;
  r += n_y * l_p;
  stack.middleRows(r, n_y * l_p) = e_p * pred.ef_perp;

  pred.stacked_pinv = pinv(stack, opts.rank_tol);
  pred.y_f_ef_perp = blocks.y_f * pred.ef_perp;
  pred.m = pred.ef_perp * pred.stacked_pinv;

  // Window-shift map: the next stacked data vector in terms of the current
  // coefficient vector alpha. Rows follow the stack layout above; the
  // realized-output and true-innovation contributions enter through z1..z3.
  pred.p = Matrix::Zero(rows, m);
  pred.z1 = Matrix::Zero(rows, m);
  pred.z2 = Matrix::Zero(rows, n_u * l_f);
  pred.z3 = Matrix::Zero(rows, n_y);
  r = 0;
  // u_p(t+1): drop the oldest input block, append u(t) = first u_f block.
  pred.p.middleRows(r, n_u * (l_p - 1)) = blocks.u_p.bottomRows(n_u * (l_p - 1));
  r += n_u * (l_p - 1);
  pred.p.middleRows(r, n_u) = blocks.u_f.topRows(n_u);
  r += n_u;
  // u_f(t+1) is exogenous.
  pred.z2.middleRows(r, n_u * l_f) = Matrix::Identity(n_u * l_f, n_u * l_f);
  r += n_u * l_f;
  // y_p(t+1): shift, then the realized y(t) = Y_f,[1] alpha_kf(t) + e(t).
  pred.p.middleRows(r, n_y * (l_p - 1)) = blocks.y_p.bottomRows(n_y * (l_p - 1));
  r += n_y * (l_p - 1);
  pred.z1.middleRows(r, n_y) = blocks.y_f.topRows(n_y);
  pred.z3.middleRows(r, n_y) = Matrix::Identity(n_y, n_y);
  r += n_y;
  // e_p(t+1): shift, then e_hat(t) = y(t) - Y_f,[1] alpha(t).
  pred.p.middleRows(r, n_y * (l_p - 1)) = e_p.bottomRows(n_y * (l_p - 1));
  r += n_y * (l_p - 1);
  pred.p.middleRows(r, n_y) = -blocks.y_f.topRows(n_y);
  pred.z1.middleRows(r, n_y) = blocks.y_f.topRows(n_y);
  pred.z3.middleRows(r, n_y) = Matrix::Identity(n_y, n_y);

  pred.theta = pred.m * pred.p;
  pred.theta_radius = spectral_radius(pred.theta);
  return pred;
}

PredictionResult predict(const InnoPredictor& pred, const OnlineState& s,
                         const Vector& u_f) {
  const Eigen::Index n_y = pred.n_y();
  if (u_f.size() != pred.n_u() * pred.l_f())
    throw std::invalid_argument("predict: u_f length");
  if (s.u_p.size() != pred.n_u() * pred.l_p() ||
      s.y_p.size() != n_y * pred.l_p() || s.e_p.size() != n_y * pred.l_p())
    throw std::invalid_argument("predict: window lengths");
  const Vector w = stack_rhs(s.u_p, u_f, s.y_p, s.e_p);
  const Vector h = pred.stacked_pinv * w;
  PredictionResult out;
  out.y_f_hat = pred.y_f_ef_perp * h;
  out.h_norm = h.norm();
  out.one_step = out.y_f_hat.head(n_y);
  out.alpha = pred.ef_perp * h;
  return out;
}

SpcPredictor build_spc_predictor(const HankelBlocks& blocks) {
  SpcPredictor spc;
  const Eigen::Index rows =
      blocks.n_u * (blocks.l_p + blocks.l_f) + blocks.n_y * blocks.l_p;
  Matrix stack(rows, blocks.m);
  stack << blocks.u_p, blocks.u_f, blocks.y_p;
  spc.stacked_pinv = pinv(stack);
  spc.y_f = blocks.y_f;
  spc.l_p = blocks.l_p;
  spc.l_f = blocks.l_f;
  spc.n_u = blocks.n_u;
  spc.n_y = blocks.n_y;
  spc.m = blocks.m;
  return spc;
}

PredictionResult predict_spc(const SpcPredictor& spc, const Vector& u_p,
                             const Vector& y_p, const Vector& u_f) {
  if (u_p.size() != spc.n_u * spc.l_p || y_p.size() != spc.n_y * spc.l_p ||
      u_f.size() != spc.n_u * spc.l_f)
    throw std::invalid_argument("predict_spc: window lengths");
  Vector w(u_p.size() + u_f.size() + y_p.size());
  w << u_p, u_f, y_p;
  const Vector g = spc.stacked_pinv * w;
  PredictionResult out;
  out.y_f_hat = spc.y_f * g;
  out.h_norm = g.norm();
  out.one_step = out.y_f_hat.head(spc.n_y);
  out.alpha = g;
  return out;
}

PredictionResult predict_spc(const HankelBlocks& blocks, const Vector& u_p,
                             const Vector& y_p, const Vector& u_f) {
  return predict_spc(build_spc_predictor(blocks), u_p, y_p, u_f);
}

OnlineState update_window(const OnlineState& s, const Vector& u_t,
                          const Vector& y_t,
                          const Vector& one_step_prediction) {
  const Eigen::Index n_u = u_t.size(), n_y = y_t.size();
  if (one_step_prediction.size() != n_y)
    throw std::invalid_argument("update_window: prediction length");
  OnlineState next;
  next.t = s.t + 1;
  next.u_p.resize(s.u_p.size());
  next.u_p << s.u_p.tail(s.u_p.size() - n_u), u_t;
  next.y_p.resize(s.y_p.size());
  next.y_p << s.y_p.tail(s.y_p.size() - n_y), y_t;
  next.e_p.resize(s.e_p.size());
  next.e_p << s.e_p.tail(s.e_p.size() - n_y), y_t - one_step_prediction;
  return next;
}

InitWindowResult init_innovation_window(const HankelBlocks& blocks,
                                        const Vector& u_p0,
                                        const Vector& y_p0) {
  if (!blocks.has_e())
    throw std::invalid_argument("init_innovation_window: innovation blocks missing");
  if (u_p0.size() != blocks.n_u * blocks.l_p ||
      y_p0.size() != blocks.n_y * blocks.l_p)
    throw std::invalid_argument("init_innovation_window: window lengths");
  Matrix a_stack(blocks.u_p.rows() + blocks.y_p.rows(), blocks.m);
  a_stack << blocks.u_p, blocks.y_p;
  Vector rhs(u_p0.size() + y_p0.size());
  rhs << u_p0, y_p0;

  const Vector g_part = pinv(a_stack) * rhs;
  const Matrix n_c = null_space_basis(a_stack);
  const Matrix& ep = *blocks.e_p;
  InitWindowResult out;
  out.feasibility_gap = (a_stack * g_part - rhs).norm();
  if (n_c.cols() > 0) {
    const Vector z = -pinv(ep * n_c) * (ep * g_part);
    out.g = g_part + n_c * z;
  } else {
    out.g = g_part;
  }
  out.e_p0 = ep * out.g;
  return out;
}

Certificate check_certificate(const InnoPredictor& pred) {
  return {pred.theta_radius < 1.0, pred.theta_radius};
}

OpenLoopLog run_open_loop(const InnoPredictor& pred, OnlineState s,
                          const Matrix& u, const Matrix& y, int t0,
                          int n_instants) {
  const Eigen::Index n_u = pred.n_u(), n_y = pred.n_y();
  const int l_f = pred.l_f();
  if (n_instants < 1) throw std::invalid_argument("run_open_loop: n_instants");
  if (t0 + n_instants - 1 + l_f > u.cols())
    throw DataLengthError("run_open_loop: input record too short");
  if (t0 + n_instants > y.cols())
    throw DataLengthError("run_open_loop: output record too short");

  OpenLoopLog log;
  log.t0 = t0;
  log.predictions.resize(n_y * l_f, n_instants);
  log.e_hat.resize(n_y, n_instants);
  log.alpha.resize(pred.blocks.m, n_instants);
  log.h_norm.resize(n_instants);
  for (int i = 0; i < n_instants; ++i) {
    const int t = t0 + i;
    Vector u_f(n_u * l_f);
    for (int j = 0; j < l_f; ++j) u_f.segment(j * n_u, n_u) = u.col(t + j);
    const PredictionResult r = predict(pred, s, u_f);
    log.predictions.col(i) = r.y_f_hat;
    log.alpha.col(i) = r.alpha;
    log.h_norm[i] = r.h_norm;
    log.e_hat.col(i) = y.col(t) - r.one_step;
    s = update_window(s, u.col(t), y.col(t), r.one_step);
  }
  return log;
}

Vector stack_window(const Matrix& seq, int t0, int l) {
  if (t0 < l) throw std::invalid_argument("stack_window: t0 < window length");
  const Eigen::Index dim = seq.rows();
  Vector w(dim * l);
  for (int i = 0; i < l; ++i) w.segment(i * dim, dim) = seq.col(t0 - l + i);
  return w;
}

}  // namespace innodpc
