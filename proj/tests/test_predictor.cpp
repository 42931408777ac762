#include <cmath>

#include "doctest.h"
#include "innodpc/hankel.hpp"
#include "innodpc/innovation.hpp"
#include "innodpc/numerics.hpp"
#include "innodpc/predictor.hpp"
#include "innodpc/rng.hpp"
#include "innodpc/system.hpp"

using innodpc::Matrix;
using innodpc::NoiseSpec;
using innodpc::Trajectory;
using innodpc::Vector;

namespace {

constexpr int kLp = 10;
constexpr int kLf = 15;

// Offline record -> fitted pipeline under the standard excitation protocol.
innodpc::RecordPipeline make_pipeline(std::uint64_t seed, double q, int rho) {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const Matrix u =
      innodpc::gen_square_wave_input(50, 2.0, 0.01, rho + 200, seed);
  const Trajectory t =
      innodpc::simulate(plant, u, NoiseSpec{seed + 1, q}, Vector::Zero(2));
  return innodpc::build_from_record(t.u, t.y, rho, rho, kLp, kLf);
}

Vector rand_vec(innodpc::Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

double log_energy_slope(const Matrix& e_hat) {
  const Eigen::Index n = e_hat.cols();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    const double y = std::log(e_hat.col(i).squaredNorm() + 1e-300);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("construction certifies the standard setup") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  const innodpc::InnoPredictor& pred = pipe.predictor;
  CHECK(pred.blocks.m == 176);
  CHECK(pred.ef_perp.cols() == 176 - kLf);
  // Orthonormal null basis annihilating the future innovation rows.
  CHECK((pred.ef_perp.transpose() * pred.ef_perp -
         Matrix::Identity(pred.ef_perp.cols(), pred.ef_perp.cols()))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((*pred.blocks.e_f * pred.ef_perp).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(pred.ef_sigma_min > 0.0);
  CHECK((pred.theta - pred.m * pred.p).norm() == 0.0);
  CHECK(pred.theta_radius ==
        doctest::Approx(innodpc::spectral_radius(pred.theta)).epsilon(1e-12));
  CHECK(pred.theta_radius < 1.0);
  CHECK(innodpc::check_certificate(pred).is_schur);
}

TEST_CASE("window recursion matrices carry the documented structure") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  const innodpc::InnoPredictor& pred = pipe.predictor;
  const innodpc::HankelBlocks& b = pred.blocks;
  const Eigen::Index rows = kLp + kLf + 2 * kLp;  // n_u = n_y = 1

  REQUIRE(pred.z2.rows() == rows);
  REQUIRE(pred.z2.cols() == kLf);
  // Identity block on the future-input rows, zero everywhere else.
  CHECK((pred.z2.middleRows(kLp, kLf) - Matrix::Identity(kLf, kLf)).norm() ==
        0.0);
  CHECK(pred.z2.topRows(kLp).norm() == 0.0);
  CHECK(pred.z2.bottomRows(2 * kLp).norm() == 0.0);

  // Realized-output rows: the appended y(t) and the appended innovation both
  // read the first future-output row.
  const Eigen::Index y_append = kLp + kLf + kLp - 1;
  const Eigen::Index e_append = rows - 1;
  CHECK((pred.z1.row(y_append) - b.y_f.row(0)).norm() == 0.0);
  CHECK((pred.z1.row(e_append) - b.y_f.row(0)).norm() == 0.0);
  {
    Matrix z1_rest = pred.z1;
    z1_rest.row(y_append).setZero();
    z1_rest.row(e_append).setZero();
    CHECK(z1_rest.norm() == 0.0);
  }
  CHECK(pred.z3.rows() == rows);
  CHECK(pred.z3.cols() == 1);
  CHECK(pred.z3(y_append, 0) == 1.0);
  CHECK(pred.z3(e_append, 0) == 1.0);
  CHECK(pred.z3.sum() == 2.0);

  // Shift map: window tails move up, the predicted-output row enters the
  // innovation slot with a minus sign.
  CHECK((pred.p.topRows(kLp - 1) - b.u_p.bottomRows(kLp - 1)).norm() == 0.0);
  CHECK((pred.p.row(kLp - 1) - b.u_f.row(0)).norm() == 0.0);
  CHECK(pred.p.middleRows(kLp, kLf).norm() == 0.0);
  CHECK((pred.p.row(e_append) + b.y_f.row(0)).norm() == 0.0);
}

TEST_CASE("m composes the null basis with the reduced pseudo-inverse") {
  const innodpc::RecordPipeline pipe = make_pipeline(2, 1.13, 15);
  const innodpc::InnoPredictor& pred = pipe.predictor;
  const innodpc::HankelBlocks& b = pred.blocks;
  CHECK((pred.m - pred.ef_perp * pred.stacked_pinv).norm() == 0.0);

  Matrix stack(kLp + kLf + 2 * kLp, pred.ef_perp.cols());
  stack << b.u_p * pred.ef_perp, b.u_f * pred.ef_perp, b.y_p * pred.ef_perp,
      *b.e_p * pred.ef_perp;
  innodpc::Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector v = rand_vec(rng, stack.cols());
    const Vector lhs = pred.m * (stack * v);
    const Vector rhs = pred.ef_perp * (pred.stacked_pinv * (stack * v));
    CHECK((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("reduced solve agrees with the full stacked pseudo-inverse") {
  const innodpc::RecordPipeline pipe = make_pipeline(4, 1.13, 15);
  const innodpc::InnoPredictor& pred = pipe.predictor;
  const innodpc::HankelBlocks& b = pred.blocks;

  // Consistent window: any recorded Hankel column solves the full system.
  Matrix full(b.u_p.rows() + b.u_f.rows() + b.y_p.rows() + b.e_p->rows() +
                  b.e_f->rows(),
              b.m);
  full << b.u_p, b.u_f, b.y_p, *b.e_p, *b.e_f;
  const Matrix full_pinv = innodpc::pinv(full);
  for (Eigen::Index j : {0, 40, 111}) {
    Vector rhs = Vector::Zero(full.rows());
    rhs.head(full.rows() - b.e_f->rows()) << b.u_p.col(j), b.u_f.col(j),
        b.y_p.col(j), b.e_p->col(j);
    const Vector g_full = full_pinv * rhs;
    const Vector y_full = b.y_f * g_full;

    innodpc::OnlineState s;
    s.u_p = b.u_p.col(j);
    s.y_p = b.y_p.col(j);
    s.e_p = b.e_p->col(j);
    const innodpc::PredictionResult r = innodpc::predict(pred, s, b.u_f.col(j));
    CHECK((r.y_f_hat - y_full).norm() < 1e-8 * (1.0 + y_full.norm()));
  }
}

TEST_CASE("zero windows give the zero prediction") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  innodpc::OnlineState s;
  s.u_p = Vector::Zero(kLp);
  s.y_p = Vector::Zero(kLp);
  s.e_p = Vector::Zero(kLp);
  const innodpc::PredictionResult r =
      innodpc::predict(pipe.predictor, s, Vector::Zero(kLf));
  CHECK(r.y_f_hat.norm() == 0.0);
  CHECK(r.h_norm == 0.0);
  CHECK(r.one_step.norm() == 0.0);
  CHECK(r.alpha.norm() == 0.0);
}

TEST_CASE("prediction is linear in the stacked data") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  innodpc::Rng rng(8);
  innodpc::OnlineState s1, s2, s3;
  s1.u_p = rand_vec(rng, kLp);
  s1.y_p = rand_vec(rng, kLp);
  s1.e_p = rand_vec(rng, kLp);
  s2.u_p = rand_vec(rng, kLp);
  s2.y_p = rand_vec(rng, kLp);
  s2.e_p = rand_vec(rng, kLp);
  const Vector uf1 = rand_vec(rng, kLf), uf2 = rand_vec(rng, kLf);
  const double a = 0.7, b = -1.3;
  s3.u_p = a * s1.u_p + b * s2.u_p;
  s3.y_p = a * s1.y_p + b * s2.y_p;
  s3.e_p = a * s1.e_p + b * s2.e_p;
  const Vector y1 = innodpc::predict(pipe.predictor, s1, uf1).y_f_hat;
  const Vector y2 = innodpc::predict(pipe.predictor, s2, uf2).y_f_hat;
  const Vector y3 =
      innodpc::predict(pipe.predictor, s3, a * uf1 + b * uf2).y_f_hat;
  CHECK((y3 - (a * y1 + b * y2)).norm() < 1e-9 * (1.0 + y3.norm()));
}

TEST_CASE("true innovation windows reproduce the steady-state filter") {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const double q = 1.13;

  const Matrix u_off = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 21);
  const Trajectory off =
      innodpc::simulate(plant, u_off, NoiseSpec{22, q}, Vector::Zero(2));
  const innodpc::FilterResult f_off =
      innodpc::sskf_filter(plant, off.u, off.y, Vector::Zero(2));
  const innodpc::HankelBlocks blocks =
      innodpc::partition(off.u, off.y, f_off.e, kLp, kLf);
  const innodpc::InnoPredictor pred = innodpc::build_inno_predictor(blocks);

  const Matrix u_test = innodpc::gen_gaussian_input(4.0, 100, 23);
  const Trajectory test =
      innodpc::simulate(plant, u_test, NoiseSpec{24, q}, Vector::Zero(2));
  const innodpc::FilterResult f_test =
      innodpc::sskf_filter(plant, test.u, test.y, Vector::Zero(2));

  innodpc::OnlineState s;
  s.u_p = innodpc::stack_window(test.u, kLp, kLp);
  s.y_p = innodpc::stack_window(test.y, kLp, kLp);
  s.e_p = innodpc::stack_window(f_test.e, kLp, kLp);
  s.t = kLp;
  for (int t = kLp; t + kLf <= 100; ++t) {
    const Vector u_f = innodpc::stack_window(test.u, t + kLf, kLf);
    const innodpc::PredictionResult r = innodpc::predict(pred, s, u_f);
    const Vector oracle = innodpc::sskf_predict(plant, f_test.x_hat.col(t), u_f);
    CHECK((r.y_f_hat - oracle).norm() <= 1e-6 * (1.0 + oracle.norm()));
    CHECK(r.one_step.size() == 1);
    CHECK(r.one_step[0] == r.y_f_hat[0]);
    // The realized innovation estimate coincides with the filter's.
    const double e_append = test.y(0, t) - r.one_step[0];
    CHECK(std::abs(e_append - f_test.e(0, t)) <= 1e-6);
    s = innodpc::update_window(s, test.u.col(t), test.y.col(t), r.one_step);
  }
}

TEST_CASE("noise-free reduction matches the simulated truth") {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const Matrix u_off = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 5);
  CHECK(innodpc::is_persistently_exciting(u_off, 25 + 2).ok);
  const Trajectory off =
      innodpc::simulate(plant, u_off, NoiseSpec{6, 0.0}, Vector::Zero(2));

  const innodpc::HankelBlocks spc_blocks =
      innodpc::partition(off.u, off.y, std::nullopt, kLp, kLf);
  const innodpc::HankelBlocks zero_e_blocks = innodpc::partition(
      off.u, off.y, Matrix::Zero(1, off.u.cols()), kLp, kLf);
  innodpc::PredictorOptions opts;
  opts.require_full_rank_ef = false;
  const innodpc::InnoPredictor inno =
      innodpc::build_inno_predictor(zero_e_blocks, opts);

  const Matrix u_test = innodpc::gen_gaussian_input(4.0, 60, 7);
  const Trajectory test =
      innodpc::simulate(plant, u_test, NoiseSpec{8, 0.0}, Vector::Zero(2));
  for (int t : {10, 20, 25, 31, 44}) {
    const Vector u_p = innodpc::stack_window(test.u, t, kLp);
    const Vector y_p = innodpc::stack_window(test.y, t, kLp);
    const Vector u_f = innodpc::stack_window(test.u, t + kLf, kLf);
    const Vector truth = innodpc::stack_window(test.y, t + kLf, kLf);

    const innodpc::PredictionResult spc =
        innodpc::predict_spc(spc_blocks, u_p, y_p, u_f);
    CHECK((spc.y_f_hat - truth).norm() <= 1e-8 * (1.0 + truth.norm()));

    innodpc::OnlineState s;
    s.u_p = u_p;
    s.y_p = y_p;
    s.e_p = Vector::Zero(kLp);
    const innodpc::PredictionResult r = innodpc::predict(inno, s, u_f);
    CHECK((r.y_f_hat - truth).norm() <= 1e-8 * (1.0 + truth.norm()));
  }
}

TEST_CASE("spc baseline: zero data, prebuilt equivalence") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  const innodpc::HankelBlocks& b = pipe.blocks;
  const innodpc::PredictionResult zero = innodpc::predict_spc(
      b, Vector::Zero(kLp), Vector::Zero(kLp), Vector::Zero(kLf));
  CHECK(zero.y_f_hat.norm() == 0.0);

  const innodpc::SpcPredictor spc = innodpc::build_spc_predictor(b);
  innodpc::Rng rng(12);
  const Vector u_p = rand_vec(rng, kLp), y_p = rand_vec(rng, kLp),
               u_f = rand_vec(rng, kLf);
  const Vector via_blocks = innodpc::predict_spc(b, u_p, y_p, u_f).y_f_hat;
  const Vector via_prebuilt = innodpc::predict_spc(spc, u_p, y_p, u_f).y_f_hat;
  CHECK((via_blocks - via_prebuilt).norm() == 0.0);
}

TEST_CASE("innovation predictor beats spc at the ten-step horizon") {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const double q = 1.13;
  double sse_inno = 0.0, sse_spc = 0.0;
  for (int run = 0; run < 12; ++run) {
    const std::uint64_t seed = innodpc::run_seed(1, run);
    const Matrix u_off =
        innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, seed);
    const Trajectory off =
        innodpc::simulate(plant, u_off, NoiseSpec{seed + 1, q}, Vector::Zero(2));
    const innodpc::RecordPipeline pipe =
        innodpc::build_from_record(off.u, off.y, 15, 15, kLp, kLf);
    const innodpc::SpcPredictor spc = innodpc::build_spc_predictor(pipe.blocks);

    const Matrix u_test = innodpc::gen_gaussian_input(4.0, 100, seed + 2);
    const Trajectory test =
        innodpc::simulate(plant, u_test, NoiseSpec{seed + 3, q}, Vector::Zero(2));

    innodpc::OnlineState s;
    s.u_p = innodpc::stack_window(test.u, kLp, kLp);
    s.y_p = innodpc::stack_window(test.y, kLp, kLp);
    s.e_p = innodpc::init_innovation_window(pipe.blocks, s.u_p, s.y_p).e_p0;
    const int n_instants = 100 - kLp - kLf + 1;
    const innodpc::OpenLoopLog log =
        innodpc::run_open_loop(pipe.predictor, s, test.u, test.y, kLp, n_instants);
    for (int i = 0; i < n_instants; ++i) {
      const int t = kLp + i;
      const Vector u_p = innodpc::stack_window(test.u, t, kLp);
      const Vector y_p = innodpc::stack_window(test.y, t, kLp);
      const Vector u_f = innodpc::stack_window(test.u, t + kLf, kLf);
      const innodpc::PredictionResult r = innodpc::predict_spc(spc, u_p, y_p, u_f);
      const double truth = test.y(0, t + 9);
      sse_inno += std::pow(log.predictions(9, i) - truth, 2);
      sse_spc += std::pow(r.y_f_hat[9] - truth, 2);
    }
  }
  CHECK(sse_inno < sse_spc);
}

TEST_CASE("update_window shifts, appends, and replaces at depth one") {
  innodpc::OnlineState s;
  s.u_p = Vector::Constant(1, 3.0);
  s.y_p = Vector::Constant(1, -1.0);
  s.e_p = Vector::Constant(1, 0.5);
  const innodpc::OnlineState next = innodpc::update_window(
      s, Vector::Constant(1, 7.0), Vector::Constant(1, 2.0),
      Vector::Constant(1, 1.5));
  CHECK(next.u_p[0] == 7.0);
  CHECK(next.y_p[0] == 2.0);
  CHECK(next.e_p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(next.t == s.t + 1);

  innodpc::OnlineState deep;
  deep.u_p = Vector::LinSpaced(3, 1.0, 3.0);
  deep.y_p = Vector::LinSpaced(3, 4.0, 6.0);
  deep.e_p = Vector::LinSpaced(3, 7.0, 9.0);
  const Vector y_t = Vector::Constant(1, 10.0);
  const innodpc::OnlineState rolled =
      innodpc::update_window(deep, Vector::Constant(1, 0.25), y_t, y_t);
  CHECK(rolled.u_p[0] == 2.0);
  CHECK(rolled.u_p[2] == 0.25);
  CHECK(rolled.y_p[2] == 10.0);
  // Perfect one-step prediction appends a zero innovation.
  CHECK(rolled.e_p[2] == 0.0);
  CHECK(rolled.e_p[0] == 8.0);
}

TEST_CASE("window init matches a constrained least-squares oracle") {
  const innodpc::RecordPipeline pipe = make_pipeline(9, 1.13, 15);
  const innodpc::HankelBlocks& b = pipe.blocks;
  const Eigen::Index j = 40;
  const Vector u_p0 = b.u_p.col(j), y_p0 = b.y_p.col(j);
  const innodpc::InitWindowResult res =
      innodpc::init_innovation_window(b, u_p0, y_p0);
  CHECK(res.feasibility_gap < 1e-8);
  // A recorded column is feasible, so the minimum cannot exceed it.
  CHECK(res.e_p0.norm() <= b.e_p->col(j).norm() + 1e-10);

  // KKT system of min ||E_p g||^2 subject to col(U_p, Y_p) g = rhs.
  Matrix a_stack(2 * kLp, b.m);
  a_stack << b.u_p, b.y_p;
  const Matrix& ep = *b.e_p;
  Matrix kkt = Matrix::Zero(b.m + 2 * kLp, b.m + 2 * kLp);
  kkt.topLeftCorner(b.m, b.m) = 2.0 * ep.transpose() * ep;
  kkt.topRightCorner(b.m, 2 * kLp) = a_stack.transpose();
  kkt.bottomLeftCorner(2 * kLp, b.m) = a_stack;
  Vector rhs = Vector::Zero(b.m + 2 * kLp);
  rhs.tail(2 * kLp) << u_p0, y_p0;
  const Vector sol = innodpc::pinv(kkt) * rhs;
  const Vector e_oracle = ep * sol.head(b.m);
  CHECK((res.e_p0 - e_oracle).norm() <= 1e-6 * (1.0 + e_oracle.norm()));
}

TEST_CASE("window init returns zero innovations on noise-free data") {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 5);
  const Trajectory off =
      innodpc::simulate(plant, u, NoiseSpec{6, 0.0}, Vector::Zero(2));
  const innodpc::HankelBlocks blocks = innodpc::partition(
      off.u, off.y, Matrix::Zero(1, off.u.cols()), kLp, kLf);
  const innodpc::InitWindowResult res = innodpc::init_innovation_window(
      blocks, blocks.u_p.col(3), blocks.y_p.col(3));
  CHECK(res.e_p0.norm() < 1e-10);
  CHECK(res.feasibility_gap < 1e-8);
}

TEST_CASE("certificate reads the spectral radius of the window map") {
  innodpc::InnoPredictor degenerate;
  degenerate.theta = Matrix::Zero(4, 4);
  degenerate.theta_radius = 0.0;
  const innodpc::Certificate c = innodpc::check_certificate(degenerate);
  CHECK(c.is_schur);
  CHECK(c.radius == 0.0);

  // Seeded record where the two window lengths land on opposite sides.
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const std::uint64_t seed = innodpc::run_seed(65, 0);
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, seed);
  const Trajectory t =
      innodpc::simulate(plant, u, NoiseSpec{seed + 1, 1.13}, Vector::Zero(2));
  const innodpc::RecordPipeline stable =
      innodpc::build_from_record(t.u, t.y, 15, 50, kLp, kLf);
  const innodpc::RecordPipeline unstable =
      innodpc::build_from_record(t.u, t.y, 50, 50, kLp, kLf);
  CHECK(innodpc::check_certificate(stable.predictor).is_schur);
  CHECK_FALSE(innodpc::check_certificate(unstable.predictor).is_schur);
}

TEST_CASE("feeding back its own predictions silences the innovation log") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  const Matrix u = innodpc::gen_gaussian_input(4.0, 40, 31);
  innodpc::Rng rng(32);
  innodpc::OnlineState s;
  s.u_p = rand_vec(rng, kLp);
  s.y_p = rand_vec(rng, kLp);
  s.e_p = rand_vec(rng, kLp);
  for (int t = kLp; t < kLp + 5; ++t) {
    const Vector u_f = innodpc::stack_window(u, t + kLf, kLf);
    const innodpc::PredictionResult r = innodpc::predict(pipe.predictor, s, u_f);
    s = innodpc::update_window(s, u.col(t), r.one_step, r.one_step);
    CHECK(s.e_p[kLp - 1] == 0.0);
  }
}

TEST_CASE("open-loop run equals a manual predict-update replay") {
  const innodpc::RecordPipeline pipe = make_pipeline(13, 1.13, 15);
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_gaussian_input(4.0, 60, 33);
  const Trajectory test =
      innodpc::simulate(plant, u, NoiseSpec{34, 1.13}, Vector::Zero(2));
  innodpc::OnlineState s;
  s.u_p = innodpc::stack_window(test.u, kLp, kLp);
  s.y_p = innodpc::stack_window(test.y, kLp, kLp);
  s.e_p = innodpc::init_innovation_window(pipe.blocks, s.u_p, s.y_p).e_p0;

  const int n = 10;
  const innodpc::OpenLoopLog log =
      innodpc::run_open_loop(pipe.predictor, s, test.u, test.y, kLp, n);
  CHECK(log.t0 == kLp);
  innodpc::OnlineState replay = s;
  for (int i = 0; i < n; ++i) {
    const int t = kLp + i;
    const Vector u_f = innodpc::stack_window(test.u, t + kLf, kLf);
    const innodpc::PredictionResult r =
        innodpc::predict(pipe.predictor, replay, u_f);
    CHECK((log.predictions.col(i) - r.y_f_hat).norm() == 0.0);
    CHECK((log.alpha.col(i) - r.alpha).norm() == 0.0);
    CHECK(log.h_norm[i] == r.h_norm);
    CHECK(log.e_hat(0, i) == test.y(0, t) - r.one_step[0]);
    replay = innodpc::update_window(replay, test.u.col(t), test.y.col(t),
                                    r.one_step);
  }
}

TEST_CASE("stable window maps keep the innovation log bounded") {
  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const std::uint64_t seed = innodpc::run_seed(65, 0);
  const Matrix u_off = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, seed);
  const Trajectory off =
      innodpc::simulate(plant, u_off, NoiseSpec{seed + 1, 1.13}, Vector::Zero(2));
  const innodpc::RecordPipeline stable =
      innodpc::build_from_record(off.u, off.y, 15, 50, kLp, kLf);
  const innodpc::RecordPipeline unstable =
      innodpc::build_from_record(off.u, off.y, 50, 50, kLp, kLf);
  REQUIRE(stable.predictor.theta_radius < 1.0);
  REQUIRE(unstable.predictor.theta_radius > 1.0);

  const Matrix u_test = innodpc::gen_gaussian_input(4.0, 130, seed + 2);
  const Trajectory test =
      innodpc::simulate(plant, u_test, NoiseSpec{seed + 3, 1.13}, Vector::Zero(2));
  const int n = 130 - kLp - kLf + 1;
  auto open_loop = [&](const innodpc::RecordPipeline& pipe) {
    innodpc::OnlineState s;
    s.u_p = innodpc::stack_window(test.u, kLp, kLp);
    s.y_p = innodpc::stack_window(test.y, kLp, kLp);
    s.e_p = innodpc::init_innovation_window(pipe.blocks, s.u_p, s.y_p).e_p0;
    return innodpc::run_open_loop(pipe.predictor, s, test.u, test.y, kLp, n);
  };
  const innodpc::OpenLoopLog log_stable = open_loop(stable);
  const innodpc::OpenLoopLog log_unstable = open_loop(unstable);
  const double slope_stable = log_energy_slope(log_stable.e_hat);
  const double slope_unstable = log_energy_slope(log_unstable.e_hat);
  CHECK(slope_stable < 0.01);
  CHECK(slope_unstable > slope_stable);
  const double tail_stable =
      log_stable.e_hat.rightCols(10).cwiseAbs().maxCoeff();
  const double tail_unstable =
      log_unstable.e_hat.rightCols(10).cwiseAbs().maxCoeff();
  CHECK(tail_unstable > tail_stable);
}

TEST_CASE("dimension and rank violations are rejected") {
  const innodpc::RecordPipeline pipe = make_pipeline(1, 1.13, 15);
  innodpc::OnlineState s;
  s.u_p = Vector::Zero(kLp);
  s.y_p = Vector::Zero(kLp);
  s.e_p = Vector::Zero(kLp);
  CHECK_THROWS_AS(innodpc::predict(pipe.predictor, s, Vector::Zero(kLf + 1)),
                  std::invalid_argument);
  s.e_p = Vector::Zero(kLp - 1);
  CHECK_THROWS_AS(innodpc::predict(pipe.predictor, s, Vector::Zero(kLf)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      innodpc::init_innovation_window(pipe.blocks, Vector::Zero(kLp + 2),
                                      Vector::Zero(kLp)),
      std::invalid_argument);
  CHECK_THROWS_AS(innodpc::stack_window(Matrix::Zero(1, 20), 5, 10),
                  std::invalid_argument);

  const innodpc::StateSpaceModel plant = innodpc::benchmark_plant();
  const Matrix u = innodpc::gen_square_wave_input(50, 2.0, 0.01, 215, 5);
  const Trajectory off =
      innodpc::simulate(plant, u, NoiseSpec{6, 0.0}, Vector::Zero(2));
  const innodpc::HankelBlocks no_e =
      innodpc::partition(off.u, off.y, std::nullopt, kLp, kLf);
  CHECK_THROWS_AS(innodpc::build_inno_predictor(no_e), std::invalid_argument);
  // Zero innovation rows cannot be full row rank.
  const innodpc::HankelBlocks zero_e = innodpc::partition(
      off.u, off.y, Matrix::Zero(1, off.u.cols()), kLp, kLf);
  CHECK_THROWS_AS(innodpc::build_inno_predictor(zero_e),
                  innodpc::CertificateError);
}
