#include <cmath>

#include "doctest.h"
#include "innodpc/hankel.hpp"
#include "innodpc/innovation.hpp"
#include "innodpc/numerics.hpp"
#include "innodpc/rng.hpp"
#include "innodpc/system.hpp"

using innodpc::Matrix;
using innodpc::NoiseSpec;
using innodpc::Trajectory;
using innodpc::Vector;

namespace {

// Regressor stack of the VARX fit: rho lagged (y, u) pairs plus the current
// input, over the N equation columns of a length rho + N record.
Matrix regressor_stack(const Matrix& u, const Matrix& y, int rho) {
  const Eigen::Index n_u = u.rows(), n_y = y.rows();
  const Eigen::Index n = u.cols() - rho;
  Matrix ups(n_y * rho + n_u * rho + n_u, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int lag = 0; lag < rho; ++lag) {
      ups.block(n_y * lag, j, n_y, 1) = y.col(j + lag);
      ups.block(n_y * rho + n_u * lag, j, n_u, 1) = u.col(j + lag);
    }
    ups.block(n_y * rho + n_u * rho, j, n_u, 1) = u.col(j + rho);
  }
  return ups;
}

}  // namespace

TEST_CASE("varx residuals vanish on noise-free persistently exciting data") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const int rho = 4;  // >= n_x = 2
  const Matrix u = innodpc::gen_gaussian_input(1.0, rho + 120, 3);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{1, 0.0},
                                         Vector::Zero(2));
  const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, rho);
  CHECK(fit.e_hat.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("varx recovers the coefficients of an exact autoregression") {
  const int rho = 3, n = 200;
  innodpc::Rng rng(6);
  Matrix phi_y(1, rho), phi_u(1, rho), d(1, 1);
  phi_y << 0.2, -0.1, 0.3;
  phi_u << 0.5, 0.25, -0.4;
  d << 0.7;
  Matrix u(1, rho + n), y(1, rho + n);
  for (int j = 0; j < rho + n; ++j) u(0, j) = rng.gaussian();
  for (int j = 0; j < rho; ++j) y(0, j) = rng.gaussian();
  for (int j = rho; j < rho + n; ++j) {
    double acc = d(0, 0) * u(0, j);
    for (int lag = 0; lag < rho; ++lag) {
      acc += phi_y(0, lag) * y(0, j - rho + lag);
      acc += phi_u(0, lag) * u(0, j - rho + lag);
    }
    y(0, j) = acc;
  }
  const innodpc::VarxFit fit = innodpc::fit_varx(u, y, rho);
  CHECK((fit.phi_y - phi_y).norm() < 1e-8);
  CHECK((fit.phi_u - phi_u).norm() < 1e-8);
  CHECK((fit.d - d).norm() < 1e-8);
  CHECK(fit.e_hat.norm() < 1e-8);
}

TEST_CASE("estimated innovation variance tracks the filter oracle") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const int seeds = 100;
  double ratio_sum = 0.0;
  int within = 0;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = innodpc::run_seed(1, s);
    const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, seed);
    const Trajectory t = innodpc::simulate(m, u, NoiseSpec{seed + 1, 1.13},
                                           Vector::Zero(2));
    const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, 15);
    const innodpc::FilterResult oracle =
        innodpc::sskf_filter(m, t.u, t.y, Vector::Zero(2));
    const innodpc::InnovationQuality q =
        innodpc::innovation_quality(fit.e_hat, oracle.e.rightCols(200));
    ratio_sum += q.variance_ratio(0);
    if (std::abs(q.variance_ratio(0) - 1.0) < 0.3) ++within;
  }
  CHECK(std::abs(ratio_sum / seeds - 1.0) < 0.3);
  CHECK(within >= 90);
}

TEST_CASE("varx residuals are orthogonal to the regressors") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const int rho = 6;
  const Matrix u = innodpc::gen_gaussian_input(2.0, rho + 150, 9);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{4, 1.13},
                                         Vector::Zero(2));
  const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, rho);
  const Matrix ups = regressor_stack(t.u, t.y, rho);
  const Matrix cross = fit.e_hat * ups.transpose();
  CHECK(cross.cwiseAbs().maxCoeff() <
        1e-8 * std::max(1.0, fit.e_hat.norm() * ups.norm()));
}

TEST_CASE("residuals shrink to zero in the deterministic limit") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_gaussian_input(1.0, 215, 11);
  double prev = std::numeric_limits<double>::infinity();
  for (double q : {1.0, 1e-2, 1e-4, 0.0}) {
    const Trajectory t = innodpc::simulate(m, u, NoiseSpec{3, q},
                                           Vector::Zero(2));
    const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, 15);
    const double peak = fit.e_hat.cwiseAbs().maxCoeff();
    CHECK(peak <= prev + 1e-12);
    prev = peak;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("the fit only sees the data, not the sample origin") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_gaussian_input(1.0, 215, 14);
  Trajectory t = innodpc::simulate(m, u, NoiseSpec{5, 1.13}, Vector::Zero(2));
  const innodpc::VarxFit a = innodpc::fit_varx(t.u, t.y, 10);
  t.start_index = -10;
  const innodpc::VarxFit b = innodpc::fit_varx(t.u, t.y, 10);
  CHECK((a.phi_y - b.phi_y).norm() == 0.0);
  CHECK((a.phi_u - b.phi_u).norm() == 0.0);
}

TEST_CASE("pinned feedthrough stays exactly zero") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_gaussian_input(1.0, 215, 21);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{6, 1.13},
                                         Vector::Zero(2));
  const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, 15, false);
  CHECK(fit.d.norm() == 0.0);
}

TEST_CASE("too little data raises the data-length error") {
  const Matrix u = innodpc::gen_gaussian_input(1.0, 20, 1);
  const Matrix y = innodpc::gen_gaussian_input(1.0, 20, 2);
  CHECK_THROWS_AS(innodpc::fit_varx(u, y, 15), innodpc::DataLengthError);
}

TEST_CASE("innovation quality reports the exact and the mirrored case") {
  innodpc::Rng rng(16);
  Matrix e(1, 500);
  for (int i = 0; i < 500; ++i) e(0, i) = rng.gaussian();
  const innodpc::InnovationQuality same = innodpc::innovation_quality(e, e);
  CHECK(same.correlation(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-12));
  const innodpc::InnovationQuality flipped =
      innodpc::innovation_quality(-e, e);
  CHECK(flipped.correlation(0) == doctest::Approx(-1.0).epsilon(1e-12));
  const innodpc::InnovationQuality degenerate =
      innodpc::innovation_quality(Matrix::Zero(1, 500), e);
  CHECK(std::isnan(degenerate.correlation(0)));
}

TEST_CASE("estimated innovations correlate with the filter oracle at 30 dB") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 1);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{2, 1.13},
                                         Vector::Zero(2));
  const innodpc::VarxFit fit = innodpc::fit_varx(t.u, t.y, 15);
  const innodpc::FilterResult oracle =
      innodpc::sskf_filter(m, t.u, t.y, Vector::Zero(2));
  const innodpc::InnovationQuality quality =
      innodpc::innovation_quality(fit.e_hat, oracle.e.rightCols(200));
  // > 0.9 is the typical figure at this noise level; the pinned seed makes
  // the check deterministic.
  INFO("oracle correlation ", quality.correlation(0));
  CHECK(quality.correlation(0) > 0.9);
}

TEST_CASE("order sweep reproduces the stable and unstable verdicts") {
  // Seeded record where the short order certifies and the long one does not;
  // the verdicts flip with the seed, which is exactly what the gate is for.
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const std::uint64_t seed = innodpc::run_seed(65, 0);
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, seed);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{seed + 1, 1.13},
                                         Vector::Zero(2));
  const auto rows = innodpc::sweep_rho(t.u, t.y, {15, 50}, 10, 15);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rho == 15);
  CHECK(rows[0].stable);
  CHECK(rows[0].theta_radius < 1.0);
  CHECK(rows[1].rho == 50);
  CHECK_FALSE(rows[1].stable);
  CHECK(rows[1].theta_radius > 1.0);
}

TEST_CASE("order sweep trades residual size against window stability") {
  // First-order plant, strong excitation: even rho = 1 certifies, while the
  // one-lag residual stays above the ten-lag residual.
  innodpc::StateSpaceModel m;
  m.a = Matrix::Constant(1, 1, 0.5);
  m.b = Matrix::Identity(1, 1);
  m.c = Matrix::Identity(1, 1);
  m.d = Matrix::Zero(1, 1);
  m.sigma_w = 1e-4 * Matrix::Identity(1, 1);
  m.sigma_v = 4.5e-4 * Matrix::Identity(1, 1);
  m.k = innodpc::solve_dare(m.a, m.c, m.sigma_w, m.sigma_v).gain;
  const Matrix u = innodpc::gen_gaussian_input(4.0, 215, 77);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{7, 1.0},
                                         Vector::Zero(1));
  const auto rows = innodpc::sweep_rho(t.u, t.y, {1, 10}, 4, 6);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].stable);
  CHECK(rows[0].residual_norm >= rows[1].residual_norm);
}

TEST_CASE("record pipeline carries fit, partition, and predictor together") {
  const innodpc::StateSpaceModel m = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 1);
  const Trajectory t = innodpc::simulate(m, u, NoiseSpec{2, 1.13},
                                         Vector::Zero(2));
  const innodpc::RecordPipeline pipe =
      innodpc::build_from_record(t.u, t.y, 15, 15, 10, 15);
  CHECK(pipe.fit.rho == 15);
  CHECK(pipe.blocks.m == 176);
  CHECK(pipe.blocks.has_e());
  CHECK(pipe.predictor.theta_radius > 0.0);
}
