#pragma once

#include <optional>

#include "innodpc/types.hpp"

namespace innodpc {

// Block Hankel of depth l from a dim x N sequence (one column per step):
// column j stacks x(j), ..., x(j+l-1); result is (dim*l) x (N-l+1).
Matrix build_hankel(const Matrix& seq, int l);

struct PeResult {
  bool ok = false;
  double sigma_min = 0.0;  // excitation margin
};

// Persistent excitation of the given order: full row rank of the depth-order
// Hankel under the numerics rank tolerance.
PeResult is_persistently_exciting(const Matrix& seq, int order);

// Past/future row split of the full-depth Hankels, innovation blocks optional.
struct HankelBlocks {
  Matrix u_p, u_f;
  Matrix y_p, y_f;
  std::optional<Matrix> e_p, e_f;
  int l_p = 0, l_f = 0;
  Eigen::Index n = 0;  // source length
  Eigen::Index m = 0;  // columns, N - L + 1
  Eigen::Index n_u = 0, n_y = 0;

  bool has_e() const { return e_p.has_value(); }
};

// Builds H_L(u), H_L(y) (and H_L(e) when given) with L = l_p + l_f and slices
// rows into past/future. min_state_dim feeds the data-length bound
// N >= (n_u + n_y + 1) L + n_x - 1 (innovation blocks present) or
// N >= (n_u + 1)(L + n_x) - 1 (without); violations raise DataLengthError.
HankelBlocks partition(const Matrix& u, const Matrix& y,
                       const std::optional<Matrix>& e, int l_p, int l_f,
                       int min_state_dim = 0);

}  // namespace innodpc
