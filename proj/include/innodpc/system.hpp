#pragma once

#include <cstdint>
#include <optional>

#include "innodpc/rng.hpp"
#include "innodpc/types.hpp"

namespace innodpc {

// Stochastic LTI plant
//   x(t+1) = A x(t) + B u(t) + w(t),   w ~ N(0, q * Sigma_w)
//   y(t)   = C x(t) + D u(t) + v(t),   v ~ N(0, q * Sigma_v)
// Sigma_w / Sigma_v are unit-scale covariances; NoiseSpec.q scales both, so
// one knob moves the SNR while the steady-state gain K stays put.
struct StateSpaceModel {
  Matrix a, b, c, d;
  Matrix sigma_w, sigma_v;
  std::optional<Matrix> k;  // steady-state innovation gain (predictor form)

  Eigen::Index nx() const { return a.rows(); }
  Eigen::Index nu() const { return b.cols(); }
  Eigen::Index ny() const { return c.rows(); }

  // Dimension consistency, PSD covariances, observability/controllability,
  // and Schur stability of A - KC when K is set. Throws on violation.
  void validate() const;
};

struct NoiseSpec {
  std::uint64_t seed = 0;
  double q = 1.0;
};

// Sequences are stored one column per time step (n x T).
struct Trajectory {
  Matrix u;
  Matrix y;
  std::optional<Matrix> e;
  std::optional<Matrix> x;
  int start_index = 0;

  Eigen::Index length() const { return y.cols(); }
};

// The 2-state / 1-input / 1-output benchmark plant with unit-scale
// covariances Sigma_w = 1e-4 * I2, Sigma_v = 4.5e-4; K is filled in from
// solve_dare at unit q (the gain is invariant to q).
StateSpaceModel benchmark_plant();

// Simulate the plant from x0 under u with seeded process/measurement noise;
// pass q = 0 for the deterministic plant. Returns (u, y, x).
Trajectory simulate(const StateSpaceModel& model, const Matrix& u,
                    const NoiseSpec& noise, const Vector& x0);

// Variant drawing noise from a caller-owned stream (used when several
// segments of one experiment must share a single stream).
Trajectory simulate(const StateSpaceModel& model, const Matrix& u, double q,
                    Rng& rng, const Vector& x0);

struct FilterResult {
  Matrix e;      // innovations, ny x T
  Matrix x_hat;  // a-priori state estimates, nx x (T+1); col t is x_hat(t)
};

// Steady-state Kalman filter
//   x_hat(t+1) = A x_hat(t) + B u(t) + K e(t),  e(t) = y(t) - C x_hat(t) - D u(t).
FilterResult sskf_filter(const StateSpaceModel& model, const Matrix& u,
                         const Matrix& y, const Vector& x_hat0);

// One filter step; returns the innovation and advances x_hat in place.
Vector sskf_step(const StateSpaceModel& model, Vector& x_hat, const Vector& u_t,
                 const Vector& y_t);

// Multi-step output prediction from x_hat with zero future innovations;
// u_f is stacked (n_u * L_f), result stacked (n_y * L_f).
Vector sskf_predict(const StateSpaceModel& model, const Vector& x_hat,
                    const Vector& u_f);

// Extended observability matrix col(C, CA, ..., CA^{L-1})  (ny*L x nx).
Matrix extended_observability(const StateSpaceModel& model, int l);

// Lower block-triangular impulse-response matrix T with y_f = O x + T u_f:
// block (i, j) = C A^{i-j-1} B for i > j, D on the diagonal.
Matrix impulse_toeplitz(const StateSpaceModel& model, int l);

// Rollout of the innovation form x_hat(t+1) = A x_hat + B u + K e,
// y = C x_hat + D u + e, under a given innovation sequence.
Trajectory simulate_innovation_form(const StateSpaceModel& model,
                                    const Matrix& u, const Matrix& e,
                                    const Vector& x_hat0);

// 10 log10( var[y - e] / var[e] ), variances element-wise then averaged
// across channels. Zero innovation variance -> +inf; zero signal -> -inf.
double snr_db(const Matrix& y, const Matrix& e);

// +/-amplitude square wave (first half-period high) plus zero-mean Gaussian
// dither of the given variance; 1 x n.
Matrix gen_square_wave_input(int period, double amplitude, double dither_var,
                             int n, std::uint64_t seed);

// i.i.d. zero-mean Gaussian input of the given variance; dim x n.
Matrix gen_gaussian_input(double variance, int n, std::uint64_t seed,
                          int dim = 1);

}  // namespace innodpc
