#include "innodpc/hankel.hpp"

#include <string>

#include "innodpc/numerics.hpp"

namespace innodpc {

Matrix build_hankel(const Matrix& seq, int l) {
  const Eigen::Index dim = seq.rows();
  const Eigen::Index n = seq.cols();
  if (l < 1) throw std::invalid_argument("build_hankel: depth must be >= 1");
  if (n < l)
    throw DataLengthError("build_hankel: sequence shorter than depth (N=" +
                          std::to_string(n) + ", L=" + std::to_string(l) + ")");
  const Eigen::Index m = n - l + 1;
  Matrix h(dim * l, m);
  for (int i = 0; i < l; ++i) h.middleRows(i * dim, dim) = seq.middleCols(i, m);
  return h;
}

PeResult is_persistently_exciting(const Matrix& seq, int order) {
  if (order < 1)
    throw std::invalid_argument("is_persistently_exciting: order >= 1");
  if (seq.cols() < order) return {false, 0.0};
  const Matrix h = build_hankel(seq, order);
  const SvdFactors f = svd_factors(h);
  PeResult r;
  r.sigma_min = f.sigma[f.sigma.size() - 1];
  r.ok = (f.rank == h.rows());
  return r;
}

HankelBlocks partition(const Matrix& u, const Matrix& y,
                       const std::optional<Matrix>& e, int l_p, int l_f,
                       int min_state_dim) {
  if (l_p < 1 || l_f < 1)
    throw std::invalid_argument("partition: horizons must be >= 1");
  if (u.cols() != y.cols())
    throw std::invalid_argument("partition: u and y lengths differ");
  if (e && (e->cols() != y.cols() || e->rows() != y.rows()))
    throw std::invalid_argument("partition: e must match y in shape");

  const int l = l_p + l_f;
  const Eigen::Index n = u.cols();
  const Eigen::Index n_u = u.rows(), n_y = y.rows();
  const Eigen::Index bound =
      e ? (n_u + n_y + 1) * l + min_state_dim - 1
        : (n_u + 1) * (l + min_state_dim) - 1;
  if (n < bound)
    throw DataLengthError(
        "partition: N=" + std::to_string(n) + " below the required bound " +
        std::to_string(bound) +
        (e ? " = (n_u+n_y+1)L + n_x - 1" : " = (n_u+1)(L+n_x) - 1"));

  HankelBlocks b;
  b.l_p = l_p;
  b.l_f = l_f;
  b.n = n;
  b.n_u = n_u;
  b.n_y = n_y;
  const Matrix hu = build_hankel(u, l);
  const Matrix hy = build_hankel(y, l);
  b.m = hu.cols();
  b.u_p = hu.topRows(n_u * l_p);
  b.u_f = hu.bottomRows(n_u * l_f);
  b.y_p = hy.topRows(n_y * l_p);
  b.y_f = hy.bottomRows(n_y * l_f);
  if (e) {
    const Matrix he = build_hankel(*e, l);
    b.e_p = he.topRows(n_y * l_p);
    b.e_f = he.bottomRows(n_y * l_f);
  }
  return b;
}

}  // namespace innodpc
