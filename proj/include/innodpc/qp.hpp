#pragma once

#include "innodpc/types.hpp"

namespace innodpc {

// Canonical dense convex QP
//   minimize  z' H z + f' z   subject to  G z <= h,
// H symmetric PSD. (Note the quadratic term carries no 1/2.)
struct QpProblem {
  Matrix h_mat;  // n x n
  Vector f;      // n
  Matrix g;      // n_con x n (may have zero rows)
  Vector h_vec;  // n_con
};

enum class QpStatus { optimal, max_iter, infeasible };

struct QpResult {
  Vector z;
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double kkt_residual = 0.0;
  int violated_constraint = -1;  // certificate when infeasible
};

// Minimizes z' H z + f' z subject to G z <= h. Dual active-set method for
// positive-definite H (start at the unconstrained minimizer, bring in one
// violated constraint at a time along dual-feasible steps; an unbounded step
// certifies infeasibility); falls back to operator splitting with an exact
// polish step when H is only positive-semidefinite.
QpResult solve_qp(const QpProblem& p, double tol = 1e-9, int max_iter = 10000);

}  // namespace innodpc
