#include "innodpc/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace innodpc {

namespace {

double default_rank_tol(const Matrix& x) {
  return static_cast<double>(std::max(x.rows(), x.cols())) *
         std::numeric_limits<double>::epsilon();
}

}  // namespace

SvdFactors svd_factors(const Matrix& x, double rank_tol) {
  if (!x.allFinite()) throw NumericalError("svd_factors: non-finite input");
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("svd_factors: SVD did not converge");
  SvdFactors f;
  f.u = svd.matrixU();
  f.sigma = svd.singularValues();
  f.v = svd.matrixV();
  const double smax = f.sigma.size() ? f.sigma[0] : 0.0;
  f.rank_tol = (rank_tol < 0.0 ? default_rank_tol(x) : rank_tol);
  const double cut = f.rank_tol * smax;
  f.rank = 0;
  for (Eigen::Index i = 0; i < f.sigma.size(); ++i)
    if (f.sigma[i] > cut) ++f.rank;
  return f;
}

Matrix pinv(const Matrix& x, double rank_tol) {
  const SvdFactors f = svd_factors(x, rank_tol);
  Matrix result = Matrix::Zero(x.cols(), x.rows());
  for (Eigen::Index i = 0; i < f.rank; ++i)
    result.noalias() += (1.0 / f.sigma[i]) * f.v.col(i) * f.u.col(i).transpose();
  return result;
}

Matrix null_space_basis(const Matrix& x, double rank_tol) {
  // Full V is needed: the null space lives in the trailing right-singular
  // vectors beyond the numerical rank.
  if (!x.allFinite()) throw NumericalError("null_space_basis: non-finite input");
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("null_space_basis: SVD did not converge");
  const Vector sigma = svd.singularValues();
  const double smax = sigma.size() ? sigma[0] : 0.0;
  const double tol = (rank_tol < 0.0 ? default_rank_tol(x) : rank_tol);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma[i] > tol * smax) ++rank;
  return svd.matrixV().rightCols(x.cols() - rank);
}

Eigen::Index numerical_rank(const Matrix& x, double rank_tol) {
  return svd_factors(x, rank_tol).rank;
}

double spectral_radius(const Matrix& x) {
  if (x.rows() != x.cols())
    throw std::invalid_argument("spectral_radius: matrix must be square");
  if (x.size() == 0) return 0.0;
  if (!x.allFinite()) throw NumericalError("spectral_radius: non-finite input");
  Eigen::EigenSolver<Matrix> es(x, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericalError("spectral_radius: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

DareResult solve_dare(const Matrix& a, const Matrix& c, const Matrix& sigma_w,
                      const Matrix& sigma_v, double tol, int max_iter) {
  const Eigen::Index nx = a.rows();
  const Eigen::Index ny = c.rows();
  if (a.cols() != nx || c.cols() != nx || sigma_w.rows() != nx ||
      sigma_w.cols() != nx || sigma_v.rows() != ny || sigma_v.cols() != ny)
    throw std::invalid_argument("solve_dare: inconsistent dimensions");
  Eigen::LLT<Matrix> vchol(sigma_v);
  if (vchol.info() != Eigen::Success)
    throw std::invalid_argument("solve_dare: Sigma_v must be positive definite");

  Matrix p = sigma_w;
  DareResult out;
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix s = c * p * c.transpose() + sigma_v;
    const Matrix k = a * p * c.transpose() * s.llt().solve(Matrix::Identity(ny, ny));
    const Matrix p_next =
        a * p * a.transpose() - k * c * p * a.transpose() + sigma_w;
    const double delta = (p_next - p).norm();
    p = 0.5 * (p_next + p_next.transpose());  // keep symmetric
    if (delta <= tol) {
      const Matrix s_conv = c * p * c.transpose() + sigma_v;
      out.gain =
          a * p * c.transpose() * s_conv.llt().solve(Matrix::Identity(ny, ny));
      out.covariance = p;
      out.iterations = it;
      return out;
    }
  }
  throw CertificateError("solve_dare: Riccati iteration did not converge");
}

Matrix least_squares(const Matrix& y, const Matrix& x) {
  if (y.cols() != x.cols())
    throw std::invalid_argument("least_squares: column counts differ");
  return y * pinv(x);
}

}  // namespace innodpc
