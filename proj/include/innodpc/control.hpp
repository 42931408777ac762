#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "innodpc/predictor.hpp"
#include "innodpc/qp.hpp"
#include "innodpc/system.hpp"
#include "innodpc/types.hpp"

namespace innodpc {

struct ControllerConfig {
  Matrix q_weight;  // n_y x n_y, PD
  Matrix r_weight;  // n_u x n_u, PD
  int l_p = 10, l_f = 15;
  Vector u_lo, u_hi;  // per-step input box
  Vector y_lo, y_hi;  // per-step box on predicted outputs
  std::function<Vector(int)> reference;  // r(k), k = 1..N_test and beyond
  double lambda = 0.0;       // regularization weight (reg-deepc)
  double lambda_y = 1e3;     // soft weight on the reg-deepc past-output rows
  double slack_penalty = 1e6;
  double qp_tol = 1e-9;
  int qp_max_iter = 10000;
};

// Prediction as an affine function of the stacked future inputs:
// y_f = gamma * u_f + b for the current windows.
struct AffineMap {
  Matrix gamma;
  Vector b;
};

AffineMap affine_map(const InnoPredictor& pred, const OnlineState& s);
AffineMap affine_map(const SpcPredictor& spc, const Vector& u_p,
                     const Vector& y_p);
AffineMap affine_map(const StateSpaceModel& model, const Vector& x_hat,
                     int l_f);

// Tracking QP over stacked u_f: quadratic tracking cost plus input and
// predicted-output boxes (in the z'Hz + f'z convention of qp.hpp).
QpProblem tracking_qp(const AffineMap& map, const Vector& r_vec,
                      const ControllerConfig& cfg);

struct StepResult {
  Vector u_f;      // stacked optimizer
  Vector y_f_hat;  // predicted outputs under u_f
  Vector g;        // reg-deepc only: full coefficient vector
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  bool used_slack = false;
};

StepResult inno_deepc_step(const InnoPredictor& pred, const OnlineState& s,
                           const ControllerConfig& cfg, int t);
StepResult spc_step(const SpcPredictor& spc, const Vector& u_p,
                    const Vector& y_p, const ControllerConfig& cfg, int t);
StepResult sskf_mpc_step(const StateSpaceModel& model, const Vector& x_hat,
                         const ControllerConfig& cfg, int t);

// Regularized DeePC with the full coefficient vector as decision variable:
// past-input rows eliminated exactly through the null basis of U_p,
// past-output rows soft (lambda_y), and the projection regularizer
// lambda * ||(I - Pi) g||^2 with Pi the projector onto the row space of
// col(U_p, U_f, Y_p). All run-constant pieces are precomputed here.
struct RegDeepcController {
  Matrix u_f, y_f, y_p;
  Matrix null_up;    // null basis of U_p
  Matrix up_pinv;    // particular solution map
  Matrix w;          // constant quadratic form in g
  Matrix h_z;        // null_up' * w * null_up
  Matrix u_f_n, y_f_n, y_p_n;  // constraint/readout blocks in z
  int l_f = 0;
  Eigen::Index n_u = 0, n_y = 0, m = 0;
};

RegDeepcController build_reg_deepc(const HankelBlocks& blocks,
                                   const ControllerConfig& cfg);
StepResult reg_deepc_step(const RegDeepcController& reg, const Vector& u_p,
                          const Vector& y_p, const ControllerConfig& cfg,
                          int t);

enum class ControllerKind { sskf_mpc, inno_deepc, spc, reg_deepc };

// Everything a closed-loop run needs for one controller; non-owning.
struct ControllerSetup {
  ControllerKind kind = ControllerKind::sskf_mpc;
  const StateSpaceModel* model = nullptr;     // sskf_mpc
  const InnoPredictor* inno = nullptr;        // inno_deepc
  const SpcPredictor* spc = nullptr;          // spc
  const RegDeepcController* reg = nullptr;    // reg_deepc
};

struct ClosedLoopLog {
  Matrix u, y, r;     // realized, one column per step k = 1..N_test
  Matrix y_hat_one;   // one-step predictions under the applied inputs
  std::vector<QpStatus> status;
  std::vector<int> qp_iterations;
  int solver_failures = 0;
  int slack_steps = 0;
};

// Receding-horizon loop: L_p-step unit-variance Gaussian warmup fills the
// windows (x(0) = 0), then per step solve, apply the first input block,
// advance the plant, and roll the windows. Solver failure past the slack
// fallback holds the previous input and is flagged. All controllers consume
// the identical noise/warmup streams for a given seed, so runs are paired.
ClosedLoopLog run_closed_loop(const ControllerSetup& ctrl,
                              const StateSpaceModel& plant, double q,
                              const ControllerConfig& cfg, int n_test,
                              std::uint64_t seed);

}  // namespace innodpc
