#pragma once

#include <string>
#include <vector>

#include "innodpc/predictor.hpp"
#include "innodpc/types.hpp"

namespace innodpc {

// Non-parametric VARX regression: one-step output predictor on rho lagged
// (y, u) pairs plus the current input; residuals estimate the innovations.
struct VarxFit {
  int rho = 0;
  Matrix phi_y;  // n_y x (n_y * rho)
  Matrix phi_u;  // n_y x (n_u * rho)
  Matrix d;      // n_y x n_u (zero when feedthrough is pinned)
  Matrix e_hat;  // n_y x N residuals
  double residual_norm = 0.0;
  bool rank_deficient = false;
};

// u, y carry rho presample columns followed by N regression samples
// (length N + rho in total). estimate_d = false pins the feedthrough to 0.
VarxFit fit_varx(const Matrix& u, const Matrix& y, int rho,
                 bool estimate_d = true);

struct InnovationQuality {
  Vector correlation;     // per channel, NaN when a variance vanishes
  Vector variance_ratio;  // var(e_hat) / var(e_true)
};

InnovationQuality innovation_quality(const Matrix& e_hat, const Matrix& e_true);

// VARX fit + Hankel partition + predictor from one record. The first
// n_presample columns only feed regressor lags (n_presample >= rho); the
// remaining columns provide the regression equations and the Hankel span.
struct RecordPipeline {
  VarxFit fit;
  HankelBlocks blocks;
  InnoPredictor predictor;
};

RecordPipeline build_from_record(const Matrix& u, const Matrix& y, int rho,
                                 int n_presample, int l_p, int l_f,
                                 const PredictorOptions& opts = {},
                                 bool estimate_d = true);

struct RhoSweepRow {
  int rho = 0;
  double residual_norm = 0.0;
  double theta_radius = 0.0;
  bool stable = false;
  std::string note;  // nonempty when the predictor could not be built
};

// The offline retry loop made explicit: fit each candidate rho on a shared
// equation window (presample = max candidate, carved from the record), build
// the predictor, and report the Schur margin. validation_fraction > 0 holds
// out that fraction of the equations for the reported residual.
std::vector<RhoSweepRow> sweep_rho(const Matrix& u, const Matrix& y,
                                   const std::vector<int>& rho_candidates,
                                   int l_p, int l_f,
                                   double validation_fraction = 0.0);

}  // namespace innodpc
