#pragma once

#include "innodpc/types.hpp"

namespace innodpc {

// Thin SVD with a numerical-rank decision. rank_tol < 0 selects the default
// convention max(rows, cols) * eps * sigma_max.
struct SvdFactors {
  Matrix u;       // left singular vectors (thin)
  Vector sigma;   // singular values, descending
  Matrix v;       // right singular vectors (thin)
  double rank_tol = 0.0;
  Eigen::Index rank = 0;
};

SvdFactors svd_factors(const Matrix& x, double rank_tol = -1.0);

// Moore-Penrose pseudo-inverse; singular values below rank_tol * sigma_max
// are treated as zero.
Matrix pinv(const Matrix& x, double rank_tol = -1.0);

// Columns form an orthonormal basis of the null space of x
// (cols(x) - rank(x) of them); x * result == 0.
Matrix null_space_basis(const Matrix& x, double rank_tol = -1.0);

// Numerical rank under the same tolerance convention.
Eigen::Index numerical_rank(const Matrix& x, double rank_tol = -1.0);

// max |lambda_i(x)| for square x; Schur-stable iff < 1.
double spectral_radius(const Matrix& x);

struct DareResult {
  Matrix gain;        // steady-state gain K, A - KC Schur stable
  Matrix covariance;  // fixed-point P of the Riccati map
  int iterations = 0;
};

// Fixed-point iteration on the predictor-form Riccati recursion
//   P <- A P A' - A P C' (C P C' + Sigma_v)^-1 C P A' + Sigma_w,
// K = A P C' (C P C' + Sigma_v)^-1.
DareResult solve_dare(const Matrix& a, const Matrix& c, const Matrix& sigma_w,
                      const Matrix& sigma_v, double tol = 1e-12,
                      int max_iter = 100000);

// Theta minimizing ||y - Theta x||_F, via y * pinv(x).
Matrix least_squares(const Matrix& y, const Matrix& x);

}  // namespace innodpc
