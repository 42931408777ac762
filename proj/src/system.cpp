#include "innodpc/system.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "innodpc/numerics.hpp"

namespace innodpc {

namespace {

// Cholesky factor for covariance sampling; PSD-safe (rank-deficient
// covariances fall back to an eigen square root).
Matrix covariance_sqrt(const Matrix& sigma) {
  if (sigma.norm() == 0.0) return Matrix::Zero(sigma.rows(), sigma.cols());
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  if (es.info() != Eigen::Success)
    throw NumericalError("covariance_sqrt: eigensolver failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

}  // namespace

void StateSpaceModel::validate() const {
  const Eigen::Index n = nx(), m = nu(), p = ny();
  if (a.cols() != n || b.rows() != n || c.cols() != n || d.rows() != p ||
      d.cols() != m)
    throw std::invalid_argument("StateSpaceModel: inconsistent dimensions");
  if (sigma_w.rows() != n || sigma_w.cols() != n || sigma_v.rows() != p ||
      sigma_v.cols() != p)
    throw std::invalid_argument("StateSpaceModel: covariance dimensions");
  if ((sigma_w - sigma_w.transpose()).norm() > 1e-12 * (1.0 + sigma_w.norm()) ||
      (sigma_v - sigma_v.transpose()).norm() > 1e-12 * (1.0 + sigma_v.norm()))
    throw std::invalid_argument("StateSpaceModel: covariances must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> ew(sigma_w), ev(sigma_v);
  if (ew.eigenvalues().minCoeff() < -1e-12 || ev.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("StateSpaceModel: covariances must be PSD");

  // Observability / controllability by rank of the stacked test matrices.
  Matrix obs(p * n, n), ctr(n, m * n);
  Matrix ca = c, ab = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    obs.middleRows(i * p, p) = ca;
    ctr.middleCols(i * m, m) = ab;
    ca = ca * a;
    ab = a * ab;
  }
  if (numerical_rank(obs) < n)
    throw std::invalid_argument("StateSpaceModel: (A, C) not observable");
  if (numerical_rank(ctr) < n)
    throw std::invalid_argument("StateSpaceModel: (A, B) not controllable");

  if (k) {
    if (k->rows() != n || k->cols() != p)
      throw std::invalid_argument("StateSpaceModel: gain dimensions");
    if (spectral_radius(a - *k * c) >= 1.0)
      throw std::invalid_argument("StateSpaceModel: A - KC not Schur stable");
  }
}

StateSpaceModel benchmark_plant() {
  StateSpaceModel m;
  m.a = Matrix{{0.7326, -0.0861}, {0.1722, 0.9909}};
  m.b = Matrix{{0.0609}, {0.0064}};
  m.c = Matrix{{0.0, 1.4142}};
  m.d = Matrix::Zero(1, 1);
  m.sigma_w = 1e-4 * Matrix::Identity(2, 2);
  m.sigma_v = Matrix::Constant(1, 1, 4.5e-4);
  m.k = solve_dare(m.a, m.c, m.sigma_w, m.sigma_v).gain;
  return m;
}

Trajectory simulate(const StateSpaceModel& model, const Matrix& u, double q,
                    Rng& rng, const Vector& x0) {
  const Eigen::Index t_end = u.cols();
  if (u.rows() != model.nu())
    throw std::invalid_argument("simulate: input dimension mismatch");
  if (x0.size() != model.nx())
    throw std::invalid_argument("simulate: state dimension mismatch");
  if (t_end == 0) throw std::invalid_argument("simulate: empty input");
  if (q < 0.0) throw std::invalid_argument("simulate: q must be >= 0");

  const Matrix lw = covariance_sqrt(q * model.sigma_w);
  const Matrix lv = covariance_sqrt(q * model.sigma_v);

  Trajectory traj;
  traj.u = u;
  traj.y.resize(model.ny(), t_end);
  Matrix xs(model.nx(), t_end);
  Vector x = x0;
  for (Eigen::Index t = 0; t < t_end; ++t) {
    xs.col(t) = x;
    Vector v = q > 0.0 ? Vector(lv * rng.gaussian_vector(model.ny()))
                       : Vector(Vector::Zero(model.ny()));
    Vector w = q > 0.0 ? Vector(lw * rng.gaussian_vector(model.nx()))
                       : Vector(Vector::Zero(model.nx()));
    traj.y.col(t) = model.c * x + model.d * u.col(t) + v;
    x = model.a * x + model.b * u.col(t) + w;
  }
  traj.x = std::move(xs);
  return traj;
}

Trajectory simulate(const StateSpaceModel& model, const Matrix& u,
                    const NoiseSpec& noise, const Vector& x0) {
  Rng rng(noise.seed);
  return simulate(model, u, noise.q, rng, x0);
}

FilterResult sskf_filter(const StateSpaceModel& model, const Matrix& u,
                         const Matrix& y, const Vector& x_hat0) {
  if (!model.k) throw ConfigError("sskf_filter: model has no steady-state gain");
  if (u.cols() != y.cols())
    throw std::invalid_argument("sskf_filter: sequence lengths differ");
  const Eigen::Index t_end = u.cols();
  FilterResult out;
  out.e.resize(model.ny(), t_end);
  out.x_hat.resize(model.nx(), t_end + 1);
  Vector x = x_hat0;
  for (Eigen::Index t = 0; t < t_end; ++t) {
    out.x_hat.col(t) = x;
    out.e.col(t) = sskf_step(model, x, u.col(t), y.col(t));
  }
  out.x_hat.col(t_end) = x;
  return out;
}

Vector sskf_step(const StateSpaceModel& model, Vector& x_hat, const Vector& u_t,
                 const Vector& y_t) {
  if (!model.k) throw ConfigError("sskf_step: model has no steady-state gain");
  const Vector e = y_t - model.c * x_hat - model.d * u_t;
  x_hat = model.a * x_hat + model.b * u_t + (*model.k) * e;
  return e;
}

Vector sskf_predict(const StateSpaceModel& model, const Vector& x_hat,
                    const Vector& u_f) {
  const Eigen::Index nu = model.nu(), ny = model.ny();
  if (u_f.size() % nu != 0 || u_f.size() == 0)
    throw std::invalid_argument("sskf_predict: u_f must stack whole steps");
  const Eigen::Index l_f = u_f.size() / nu;
  Vector y_f(ny * l_f);
  Vector x = x_hat;
  for (Eigen::Index i = 0; i < l_f; ++i) {
    const Vector u_i = u_f.segment(i * nu, nu);
    y_f.segment(i * ny, ny) = model.c * x + model.d * u_i;
    x = model.a * x + model.b * u_i;
  }
  return y_f;
}

Matrix extended_observability(const StateSpaceModel& model, int l) {
  const Eigen::Index ny = model.ny(), nx = model.nx();
  Matrix obs(ny * l, nx);
  Matrix ca = model.c;
  for (int i = 0; i < l; ++i) {
    obs.middleRows(i * ny, ny) = ca;
    ca = ca * model.a;
  }
  return obs;
}

Matrix impulse_toeplitz(const StateSpaceModel& model, int l) {
  const Eigen::Index ny = model.ny(), nu = model.nu();
  Matrix t = Matrix::Zero(ny * l, nu * l);
  // Markov parameters: D, CB, CAB, CA^2B, ...
  std::vector<Matrix> markov(l);
  markov[0] = model.d;
  Matrix ai_b = model.b;
  for (int i = 1; i < l; ++i) {
    markov[i] = model.c * ai_b;
    ai_b = model.a * ai_b;
  }
  for (int i = 0; i < l; ++i)
    for (int j = 0; j <= i; ++j)
      t.block(i * ny, j * nu, ny, nu) = markov[i - j];
  return t;
}

Trajectory simulate_innovation_form(const StateSpaceModel& model,
                                    const Matrix& u, const Matrix& e,
                                    const Vector& x_hat0) {
  if (!model.k)
    throw ConfigError("simulate_innovation_form: model has no gain");
  if (u.cols() != e.cols())
    throw std::invalid_argument("simulate_innovation_form: lengths differ");
  const Eigen::Index t_end = u.cols();
  Trajectory traj;
  traj.u = u;
  traj.e = e;
  traj.y.resize(model.ny(), t_end);
  Matrix xs(model.nx(), t_end);
  Vector x = x_hat0;
  for (Eigen::Index t = 0; t < t_end; ++t) {
    xs.col(t) = x;
    traj.y.col(t) = model.c * x + model.d * u.col(t) + e.col(t);
    x = model.a * x + model.b * u.col(t) + (*model.k) * e.col(t);
  }
  traj.x = std::move(xs);
  return traj;
}

double snr_db(const Matrix& y, const Matrix& e) {
  if (y.cols() != e.cols() || y.rows() != e.rows())
    throw std::invalid_argument("snr_db: dimension mismatch");
  if (y.cols() < 2) throw std::invalid_argument("snr_db: need length >= 2");
  const Matrix s = y - e;
  double var_s = 0.0, var_e = 0.0;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const auto sr = s.row(r);
    const auto er = e.row(r);
    var_s += (sr.array() - sr.mean()).square().sum() / (s.cols() - 1);
    var_e += (er.array() - er.mean()).square().sum() / (e.cols() - 1);
  }
  var_s /= y.rows();
  var_e /= y.rows();
  if (var_s == 0.0) return -std::numeric_limits<double>::infinity();
  if (var_e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(var_s / var_e);
}

Matrix gen_square_wave_input(int period, double amplitude, double dither_var,
                             int n, std::uint64_t seed) {
  if (period < 2) throw std::invalid_argument("gen_square_wave_input: period");
  if (dither_var < 0.0)
    throw std::invalid_argument("gen_square_wave_input: dither_var");
  Rng rng(seed);
  const double sd = std::sqrt(dither_var);
  Matrix u(1, n);
  for (int t = 0; t < n; ++t) {
    const bool high = (t % period) < period / 2;
    u(0, t) = (high ? amplitude : -amplitude) + sd * rng.gaussian();
  }
  return u;
}

Matrix gen_gaussian_input(double variance, int n, std::uint64_t seed, int dim) {
  if (variance < 0.0) throw std::invalid_argument("gen_gaussian_input: variance");
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  Matrix u(dim, n);
  for (int t = 0; t < n; ++t)
    for (int r = 0; r < dim; ++r) u(r, t) = sd * rng.gaussian();
  return u;
}

}  // namespace innodpc
