#include "innodpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "innodpc/numerics.hpp"

namespace innodpc {

namespace {

void check_problem(const QpProblem& p) {
  const Eigen::Index n = p.h_mat.rows();
  if (p.h_mat.cols() != n || p.f.size() != n)
    throw std::invalid_argument("solve_qp: cost dimensions");
  if ((p.h_mat - p.h_mat.transpose()).norm() > 1e-9 * (1.0 + p.h_mat.norm()))
    throw std::invalid_argument("solve_qp: H must be symmetric");
  if (p.g.rows() != p.h_vec.size() || (p.g.rows() > 0 && p.g.cols() != n))
    throw std::invalid_argument("solve_qp: constraint dimensions");
}

double kkt_residual(const QpProblem& p, const Vector& z, const Vector& mu_full) {
  // Stationarity, primal feasibility, complementary slackness (inf norms).
  double r = (2.0 * p.h_mat * z + p.f + p.g.transpose() * mu_full)
                 .cwiseAbs()
                 .maxCoeff();
  if (p.g.rows() > 0) {
    const Vector slack = p.g * z - p.h_vec;
    r = std::max(r, slack.maxCoeff());
    r = std::max(r, (mu_full.array() * slack.array()).abs().maxCoeff());
  }
  return r;
}

// Dual active-set method (Goldfarb–Idnani). Starts from the unconstrained
// minimizer and adds one violated constraint at a time, taking the longest
// step that keeps the working-set multipliers nonnegative; the dual
// objective increases monotonically, so the method cannot cycle, and an
// unbounded dual step is an exact infeasibility certificate.
QpResult solve_dual_active_set(const QpProblem& p,
                               const Eigen::LLT<Matrix>& h_llt, double tol,
                               int max_iter, bool& stalled) {
  QpResult res;
  stalled = false;
  const Eigen::Index n = p.h_mat.rows();
  Vector z = -h_llt.solve(p.f);
  std::vector<int> active;
  std::vector<double> mu;

  for (int it = 1; it <= max_iter; ++it) {
    res.iterations = it;
    // Most violated constraint at the current iterate.
    int pick = -1;
    double worst = tol;
    for (Eigen::Index i = 0; i < p.g.rows(); ++i) {
      if (std::find(active.begin(), active.end(), static_cast<int>(i)) !=
          active.end())
        continue;
      const double v = p.g.row(i).dot(z) - p.h_vec[i];
      if (v > worst) {
        worst = v;
        pick = static_cast<int>(i);
      }
    }
    if (pick < 0) {
      // Refine: re-solve the equality KKT system on the final working set so
      // the reported iterate is exact, not the accumulated-step estimate.
      const Eigen::Index na = static_cast<Eigen::Index>(active.size());
      Vector mu_full = Vector::Zero(p.g.rows());
      for (size_t j = 0; j < active.size(); ++j)
        mu_full[active[j]] = std::max(mu[j], 0.0);
      if (na > 0) {
        Matrix n_mat(n, na);
        Vector h_act(na);
        for (Eigen::Index j = 0; j < na; ++j) {
          n_mat.col(j) = p.g.row(active[static_cast<size_t>(j)]).transpose();
          h_act[j] = p.h_vec[active[static_cast<size_t>(j)]];
        }
        const Matrix h_inv_n = h_llt.solve(n_mat);
        const Matrix s = n_mat.transpose() * h_inv_n;
        const Vector rhs = -n_mat.transpose() * h_llt.solve(p.f) - h_act;
        Eigen::LDLT<Matrix> ldlt(s);
        Vector mu_ref = ldlt.solve(rhs);
        if (ldlt.info() != Eigen::Success ||
            (s * mu_ref - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
          mu_ref = pinv(s) * rhs;
        const Vector z_ref = -h_llt.solve(p.f + n_mat * mu_ref);
        Vector mu_ref_full = Vector::Zero(p.g.rows());
        for (Eigen::Index j = 0; j < na; ++j)
          mu_ref_full[active[static_cast<size_t>(j)]] =
              std::max(mu_ref[j], 0.0);
        const bool feas =
            (p.g * z_ref - p.h_vec).maxCoeff() <= std::max(tol, 1e-9);
        if (feas && mu_ref.minCoeff() >= -std::max(tol, 1e-9) &&
            kkt_residual(p, z_ref, mu_ref_full) <= kkt_residual(p, z, mu_full)) {
          z = z_ref;
          mu_full = mu_ref_full;
        }
      }
      res.z = z;
      res.status = QpStatus::optimal;
      res.kkt_residual = kkt_residual(p, z, mu_full);
      return res;
    }

    // Bring constraint `pick` into the working set: alternate primal/dual
    // steps, dropping blockers, until its violation is closed.
    const Vector c_p = -p.g.row(pick).transpose();  // inward normal
    double mu_p = 0.0;
    for (;;) {
      ++res.iterations;
      const Eigen::Index na = static_cast<Eigen::Index>(active.size());
      Vector r_dir(na);
      Vector d;
      const Vector h_inv_cp = h_llt.solve(c_p);
      if (na == 0) {
        d = h_inv_cp;
      } else {
        Matrix n_mat(n, na);
        for (Eigen::Index j = 0; j < na; ++j)
          n_mat.col(j) = -p.g.row(active[static_cast<size_t>(j)]).transpose();
        const Matrix h_inv_n = h_llt.solve(n_mat);
        const Matrix s = n_mat.transpose() * h_inv_n;
        const Vector rhs = n_mat.transpose() * h_inv_cp;
        Eigen::LDLT<Matrix> ldlt(s);
        r_dir = ldlt.solve(rhs);
        if (ldlt.info() != Eigen::Success ||
            (s * r_dir - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
          r_dir = pinv(s) * rhs;
        d = h_inv_cp - h_inv_n * r_dir;
      }

      const double cpd = c_p.dot(d);
      const double viol = p.g.row(pick).dot(z) - p.h_vec[pick];

      // Longest dual step before a working-set multiplier hits zero.
      double t1 = std::numeric_limits<double>::infinity();
      int block = -1;
      for (Eigen::Index j = 0; j < na; ++j) {
        if (r_dir[j] > 1e-12) {
          const double t = mu[static_cast<size_t>(j)] / r_dir[j];
          if (t < t1) {
            t1 = t;
            block = static_cast<int>(j);
          }
        }
      }
      // Step that closes the violation of `pick` (infinite when the
      // projected normal vanishes).
      const double t2 = cpd > 1e-14 * (1.0 + c_p.squaredNorm())
                            ? viol / cpd
                            : std::numeric_limits<double>::infinity();
      const double t = std::max(0.0, std::min(t1, t2));
      if (!std::isfinite(t)) {
        res.z = z;
        res.status = QpStatus::infeasible;
        res.violated_constraint = pick;
        return res;
      }
      if (std::isfinite(t2)) z += t * d;
      for (Eigen::Index j = 0; j < na; ++j)
        mu[static_cast<size_t>(j)] -= t * r_dir[j];
      mu_p += t;
      if (t == t2) {
        active.push_back(pick);
        mu.push_back(mu_p);
        break;
      }
      active.erase(active.begin() + block);
      mu.erase(mu.begin() + block);
    }
    if (res.iterations >= max_iter) break;
  }
  stalled = true;
  res.z = z;
  res.status = QpStatus::max_iter;
  return res;
}

QpResult solve_admm(const QpProblem& p, double tol, int max_iter) {
  // Operator splitting on  min 1/2 z' P z + q' z  s.t.  G z <= h  with
  // P = 2H, followed by an active-set polish for high-accuracy KKT residuals.
  // Constraint rows are equilibrated to unit norm first — the feasible set
  // is unchanged and the uniform step size then treats every row alike.
  const Eigen::Index n = p.h_mat.rows();
  const Eigen::Index nc = p.g.rows();
  const Matrix big_p = 2.0 * p.h_mat;
  const double sigma = 1e-6, rho = 1.0;
  QpResult res;

  Vector z;
  if (nc == 0) {
    z = -pinv(big_p) * p.f;
    res.iterations = 1;
  } else {
    Matrix g_s = p.g;
    Vector h_s = p.h_vec;
    for (Eigen::Index i = 0; i < nc; ++i) {
      const double norm = g_s.row(i).norm();
      if (norm > 0.0) {
        g_s.row(i) /= norm;
        h_s[i] /= norm;
      }
    }
    Matrix kkt = big_p + sigma * Matrix::Identity(n, n) +
                 rho * g_s.transpose() * g_s;
    Eigen::LDLT<Matrix> fac(kkt);
    Vector x = Vector::Zero(n);
    Vector s = Vector::Zero(nc);  // split copy of G x, clamped to <= h
    Vector y = Vector::Zero(nc);  // scaled dual
    const int budget = std::max(max_iter, 20000);
    int it = 0;
    for (it = 1; it <= budget; ++it) {
      const Vector rhs =
          sigma * x - p.f + g_s.transpose() * (rho * s - y);
      x = fac.solve(rhs);
      const Vector gx = g_s * x;
      const Vector s_next = (gx + y / rho).cwiseMin(h_s);
      y += rho * (gx - s_next);
      const double prim = (gx - s_next).cwiseAbs().maxCoeff();
      const double dual = rho * (g_s.transpose() * (s_next - s)).cwiseAbs().maxCoeff();
      s = s_next;
      if (prim < 1e-10 + tol && dual < 1e-10 + tol) break;
      if (it % 25 == 0) {
        // Primal-infeasibility certificate: a nonnegative dual direction v
        // with G'v = 0 and h'v < 0 proves the constraints are inconsistent.
        // The accumulated dual y points along that direction when it exists.
        const Vector v = y.cwiseMax(0.0);
        const double vn = v.maxCoeff();
        if (vn > 1e-8) {
          const Vector vhat = v / vn;
          if ((g_s.transpose() * vhat).cwiseAbs().maxCoeff() <= 1e-4 &&
              h_s.dot(vhat) <= -1e-4) {
            res.status = QpStatus::infeasible;
            res.iterations = it;
            res.z = x;
            Eigen::Index worst = 0;
            vhat.maxCoeff(&worst);
            res.violated_constraint = worst;
            return res;
          }
        }
      }
    }
    res.iterations = std::min(it, budget);
    z = x;
  }

  // Polish: lock the near-active constraints and solve the equality KKT
  // system exactly (pseudo-inverse handles the PSD-singular case). Activity
  // is judged on unit-norm rows so the margin means the same for every row.
  std::vector<int> active;
  for (Eigen::Index i = 0; i < nc; ++i) {
    const double norm = std::max(p.g.row(i).norm(), 1e-300);
    if ((p.g.row(i).dot(z) - p.h_vec[i]) / norm > -1e-7)
      active.push_back(static_cast<int>(i));
  }
  const Eigen::Index na = static_cast<Eigen::Index>(active.size());
  Matrix kkt = Matrix::Zero(n + na, n + na);
  kkt.topLeftCorner(n, n) = big_p;
  Vector rhs(n + na);
  rhs.head(n) = -p.f;
  for (Eigen::Index j = 0; j < na; ++j) {
    kkt.block(0, n + j, n, 1) = p.g.row(active[j]).transpose();
    kkt.block(n + j, 0, 1, n) = p.g.row(active[j]);
    rhs[n + j] = p.h_vec[active[j]];
  }
  const Vector sol = pinv(kkt) * rhs;
  const Vector z_pol = sol.head(n);
  Vector mu_full = Vector::Zero(nc);
  bool dual_ok = true;
  for (Eigen::Index j = 0; j < na; ++j) {
    mu_full[active[j]] = sol[n + j];
    if (sol[n + j] < -1e-7) dual_ok = false;
  }
  const bool prim_ok =
      nc == 0 || (p.g * z_pol - p.h_vec).maxCoeff() < 1e-7;
  if (dual_ok && prim_ok) {
    const double r_pol = kkt_residual(p, z_pol, mu_full.cwiseMax(0.0));
    const double r_raw = kkt_residual(p, z, Vector::Zero(nc));
    if (r_pol <= r_raw || na > 0) {
      res.z = z_pol;
      res.kkt_residual = r_pol;
      res.status = r_pol <= std::max(tol, 1e-7) ? QpStatus::optimal
                                                : QpStatus::max_iter;
      return res;
    }
  }
  res.z = z;
  res.kkt_residual = kkt_residual(p, z, mu_full.cwiseMax(0.0));
  res.status = res.kkt_residual <= std::max(tol, 1e-7) ? QpStatus::optimal
                                                       : QpStatus::max_iter;
  return res;
}

}  // namespace

QpResult solve_qp(const QpProblem& p, double tol, int max_iter) {
  check_problem(p);
  if (!p.h_mat.allFinite() || !p.f.allFinite())
    throw NumericalError("solve_qp: non-finite cost");

  // A zero row with a negative bound is unsatisfiable by any point; certify
  // infeasibility outright instead of waiting for a working set to find it.
  for (Eigen::Index i = 0; i < p.g.rows(); ++i) {
    if (p.g.row(i).cwiseAbs().maxCoeff() <= 1e-14 && p.h_vec[i] < 0.0) {
      QpResult res;
      res.status = QpStatus::infeasible;
      res.violated_constraint = i;
      res.iterations = 0;
      return res;
    }
  }

  Eigen::LLT<Matrix> h_llt(2.0 * p.h_mat);
  if (h_llt.info() == Eigen::Success) {
    bool stalled = false;
    QpResult res = solve_dual_active_set(p, h_llt, tol, max_iter, stalled);
    if (!stalled) return res;
  }
  return solve_admm(p, tol, max_iter);
}

}  // namespace innodpc
