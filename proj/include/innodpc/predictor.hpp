#pragma once

#include "innodpc/hankel.hpp"
#include "innodpc/types.hpp"

namespace innodpc {

struct PredictorOptions {
  // The construction assumes E_f has full row rank; disable only for the
  // deterministic zero-innovation reduction, where E_f == 0 and the null
  // basis is the whole coefficient space.
  bool require_full_rank_ef = true;
  double rank_tol = -1.0;
};

// Innovation-based data-driven output predictor. The future-innovation
// constraint E_f g = 0 is eliminated through the null basis ef_perp, the
// remaining equality system is solved by pseudo-inverse, and the closed-loop
// coefficient recursion matrices (p, z1..z3, theta = m * p) certify window
// stability.
struct InnoPredictor {
  HankelBlocks blocks;
  Matrix ef_perp;       // m x (m - n_y l_f), orthonormal
  Matrix stacked_pinv;  // (n_u L + 2 n_y l_p) -> reduced coefficients
  Matrix y_f_ef_perp;   // Y_f * ef_perp, prediction read-out
  Matrix m;             // ef_perp * stacked_pinv
  Matrix p;             // coefficient-to-next-window map
  Matrix z1, z2, z3;    // realized-output / future-input / innovation drives
  Matrix theta;         // m * p
  double theta_radius = 0.0;
  double ef_sigma_min = 0.0;

  Eigen::Index n_u() const { return blocks.n_u; }
  Eigen::Index n_y() const { return blocks.n_y; }
  int l_p() const { return blocks.l_p; }
  int l_f() const { return blocks.l_f; }
};

InnoPredictor build_inno_predictor(const HankelBlocks& blocks,
                                   const PredictorOptions& opts = {});

// Rolling data windows carried between receding-horizon steps (stacked).
struct OnlineState {
  Vector u_p;
  Vector y_p;
  Vector e_p;
  int t = 0;
};

struct PredictionResult {
  Vector y_f_hat;  // stacked n_y * l_f
  double h_norm = 0.0;
  Vector one_step;  // first n_y entries of y_f_hat
  Vector alpha;     // full-length coefficient vector (null basis * h)
};

PredictionResult predict(const InnoPredictor& pred, const OnlineState& s,
                         const Vector& u_f);

// Subspace predictive control baseline: min-norm g solving the past/future
// input-output equations, no innovation data.
struct SpcPredictor {
  Matrix stacked_pinv;  // pinv of col(U_p, U_f, Y_p)
  Matrix y_f;
  int l_p = 0, l_f = 0;
  Eigen::Index n_u = 0, n_y = 0, m = 0;
};

SpcPredictor build_spc_predictor(const HankelBlocks& blocks);
PredictionResult predict_spc(const SpcPredictor& spc, const Vector& u_p,
                             const Vector& y_p, const Vector& u_f);
PredictionResult predict_spc(const HankelBlocks& blocks, const Vector& u_p,
                             const Vector& y_p, const Vector& u_f);

// Shift all three windows one block and append u(t), y(t) and the realized
// innovation estimate y(t) - one_step_prediction.
OnlineState update_window(const OnlineState& s, const Vector& u_t,
                          const Vector& y_t, const Vector& one_step_prediction);

struct InitWindowResult {
  Vector e_p0;
  Vector g;                 // minimizer used
  double feasibility_gap = 0.0;  // residual of the (u_p, y_p) equations
};

// Least-norm innovation window consistent with (u_p0, y_p0): minimize
// ||E_p g||^2 over g subject to col(U_p, Y_p) g = col(u_p0, y_p0), solved by
// null-space elimination. Off-span windows fall back to the least-squares
// feasible g; the gap is reported.
InitWindowResult init_innovation_window(const HankelBlocks& blocks,
                                        const Vector& u_p0, const Vector& y_p0);

struct Certificate {
  bool is_schur = false;
  double radius = 0.0;
};

Certificate check_certificate(const InnoPredictor& pred);

// Receding-window open-loop run over a recorded trajectory: at each instant
// t = t0 .. t0+n_instants-1 predict from the current windows with the
// recorded future inputs, then roll the windows forward with the realized
// output. y must cover [t0, t0+n_instants-1]; u additionally
// [.., t0+n_instants-2+l_f].
struct OpenLoopLog {
  Matrix predictions;  // (n_y * l_f) x n_instants
  Matrix e_hat;        // n_y x n_instants
  Matrix alpha;        // m x n_instants
  Vector h_norm;
  int t0 = 0;
};

OpenLoopLog run_open_loop(const InnoPredictor& pred, OnlineState s,
                          const Matrix& u, const Matrix& y, int t0,
                          int n_instants);

// Stacked window seq(:, t0-l .. t0-1) as one column vector.
Vector stack_window(const Matrix& seq, int t0, int l);

}  // namespace innodpc
