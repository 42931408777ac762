#include "innodpc/innovation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "innodpc/hankel.hpp"
#include "innodpc/numerics.hpp"

namespace innodpc {

namespace {

Matrix varx_regressors(const Matrix& u, const Matrix& y, int rho,
                       bool estimate_d) {
  const Eigen::Index n_u = u.rows(), n_y = y.rows();
  const Eigen::Index n = u.cols() - rho;
  const Eigen::Index rows = (n_y + n_u) * rho + (estimate_d ? n_u : 0);
  Matrix ups(rows, n);
  // Lagged blocks run over samples 1-rho .. N-1 relative to the equations.
  ups.topRows(n_y * rho) = build_hankel(y.leftCols(u.cols() - 1), rho);
  ups.middleRows(n_y * rho, n_u * rho) =
      build_hankel(u.leftCols(u.cols() - 1), rho);
  if (estimate_d) ups.bottomRows(n_u) = u.rightCols(n);
  return ups;
}

}  // namespace

VarxFit fit_varx(const Matrix& u, const Matrix& y, int rho, bool estimate_d) {
  if (rho < 1) throw std::invalid_argument("fit_varx: rho must be >= 1");
  if (u.cols() != y.cols())
    throw std::invalid_argument("fit_varx: sequence lengths differ");
  const Eigen::Index n_u = u.rows(), n_y = y.rows();
  const Eigen::Index n = u.cols() - rho;
  const Eigen::Index rows = (n_y + n_u) * rho + (estimate_d ? n_u : 0);
  if (n <= rows)
    throw DataLengthError("fit_varx: need more than " + std::to_string(rows) +
                          " equations after the rho presample, got " +
                          std::to_string(std::max<Eigen::Index>(n, 0)));

  const Matrix ups = varx_regressors(u, y, rho, estimate_d);
  const Matrix targets = y.rightCols(n);
  const Matrix coef = least_squares(targets, ups);

  VarxFit fit;
  fit.rho = rho;
  fit.phi_y = coef.leftCols(n_y * rho);
  fit.phi_u = coef.middleCols(n_y * rho, n_u * rho);
  fit.d = estimate_d ? Matrix(coef.rightCols(n_u)) : Matrix(Matrix::Zero(n_y, n_u));
  fit.e_hat = targets - coef * ups;
  fit.residual_norm = fit.e_hat.norm();
  fit.rank_deficient = numerical_rank(ups) < rows;
  return fit;
}

InnovationQuality innovation_quality(const Matrix& e_hat, const Matrix& e_true) {
  if (e_hat.rows() != e_true.rows() || e_hat.cols() != e_true.cols())
    throw std::invalid_argument("innovation_quality: dimension mismatch");
  const Eigen::Index ch = e_hat.rows();
  InnovationQuality q;
  q.correlation.resize(ch);
  q.variance_ratio.resize(ch);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index r = 0; r < ch; ++r) {
    const Eigen::ArrayXd a = e_hat.row(r).array() - e_hat.row(r).mean();
    const Eigen::ArrayXd b = e_true.row(r).array() - e_true.row(r).mean();
    const double va = a.square().sum(), vb = b.square().sum();
    q.correlation[r] =
        (va > 0.0 && vb > 0.0) ? a.cwiseProduct(b).sum() / std::sqrt(va * vb) : nan;
    q.variance_ratio[r] = vb > 0.0 ? va / vb : nan;
  }
  return q;
}

RecordPipeline build_from_record(const Matrix& u, const Matrix& y, int rho,
                                 int n_presample, int l_p, int l_f,
                                 const PredictorOptions& opts, bool estimate_d) {
  if (n_presample < rho)
    throw DataLengthError("build_from_record: presample shorter than rho");
  const Eigen::Index total = u.cols();
  const Eigen::Index n = total - n_presample;
  RecordPipeline pipe;
  pipe.fit = fit_varx(u.rightCols(n + rho), y.rightCols(n + rho), rho, estimate_d);
  pipe.blocks = partition(u.rightCols(n), y.rightCols(n), pipe.fit.e_hat, l_p,
                          l_f, /*min_state_dim=*/0);
  pipe.predictor = build_inno_predictor(pipe.blocks, opts);
  return pipe;
}

std::vector<RhoSweepRow> sweep_rho(const Matrix& u, const Matrix& y,
                                   const std::vector<int>& rho_candidates,
                                   int l_p, int l_f,
                                   double validation_fraction) {
  if (rho_candidates.empty())
    throw std::invalid_argument("sweep_rho: no candidates");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("sweep_rho: validation_fraction in [0, 1)");
  const int n_rho = *std::max_element(rho_candidates.begin(), rho_candidates.end());
  const Eigen::Index n = u.cols() - n_rho;

  std::vector<RhoSweepRow> table;
  table.reserve(rho_candidates.size());
  for (int rho : rho_candidates) {
    RhoSweepRow row;
    row.rho = rho;
    try {
      const RecordPipeline pipe =
          build_from_record(u, y, rho, n_rho, l_p, l_f);
      row.theta_radius = pipe.predictor.theta_radius;
      row.stable = row.theta_radius < 1.0;
      const Eigen::Index n_val =
          static_cast<Eigen::Index>(validation_fraction * static_cast<double>(n));
      if (n_val > 0) {
        // Refit on the leading equations, score residuals on the held-out tail.
        const Eigen::Index keep = n - n_val + rho;
        const Matrix u_slice = u.rightCols(n + rho);
        const Matrix y_slice = y.rightCols(n + rho);
        const VarxFit train =
            fit_varx(u_slice.leftCols(keep), y_slice.leftCols(keep), rho);
        Matrix coef(train.phi_y.rows(),
                    train.phi_y.cols() + train.phi_u.cols() + train.d.cols());
        coef << train.phi_y, train.phi_u, train.d;
        const Matrix ups_all = varx_regressors(u_slice, y_slice, rho, true);
        const Matrix resid =
            y_slice.rightCols(n) - coef * ups_all;
        row.residual_norm = resid.rightCols(n_val).norm();
      } else {
        row.residual_norm = pipe.fit.residual_norm;
      }
    } catch (const std::exception& ex) {
      row.theta_radius = std::numeric_limits<double>::quiet_NaN();
      row.stable = false;
      row.note = ex.what();
    }
    table.push_back(row);
  }
  return table;
}

}  // namespace innodpc
