// innodpc: config-driven front end over the library modules.
//
// Subcommands: simulate | estimate | predict | control | benchmark.
// Configuration comes from a JSON file (--config), with a documented schema
// and unknown-key rejection; --paper resets the protocol parameters to the
// canonical benchmark values, and --seed/--out/--jobs override everything.
// Exit codes: 0 success, 2 config error, 3 certificate/gate failure,
// 4 numerical failure, 5 I/O.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "innodpc/bench.hpp"
#include "innodpc/control.hpp"
#include "innodpc/innovation.hpp"
#include "innodpc/numerics.hpp"
#include "innodpc/predictor.hpp"
#include "innodpc/report.hpp"
#include "innodpc/rng.hpp"
#include "innodpc/system.hpp"
#include "innodpc/types.hpp"

namespace {

using innodpc::CertificateError;
using innodpc::ConfigError;
using innodpc::IoError;
using innodpc::Matrix;
using innodpc::Vector;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct CliConfig {
  innodpc::ExperimentConfig exp;  // studies + shared protocol parameters
  std::string plant_name = "benchmark-2x1";  // "" when matrices were given
  double q = 1.13;                // noise scale for the single-run commands
  bool zero_noise = false;
  std::string controller = "inno";  // sskf | inno | spc | reg
  double lambda = 10.0;             // reg controller weight for `control`
  double slack_penalty = 1e6;
  double qp_tol = 1e-9;
  int qp_max_iter = 10000;
  std::string out = "out";
};

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config: " + path + ": " + msg);
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

Matrix as_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty 2-D array");
  const auto& first = v.front();
  if (!first.is_array() || first.empty())
    fail(path, "expected a non-empty 2-D array");
  Matrix m(static_cast<Eigen::Index>(v.size()),
           static_cast<Eigen::Index>(first.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    const std::string row_path = path + " row " + std::to_string(i);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      fail(row_path, "expected " + std::to_string(m.cols()) + " columns");
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = as_number(row[static_cast<std::size_t>(j)],
                          row_path + " col " + std::to_string(j));
  }
  return m;
}

std::vector<double> as_number_list(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<int> as_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(as_int(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Grid entries are numbers or the string "inf" (the exact subspace endpoint).
std::vector<double> as_lambda_grid(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string entry = path + "[" + std::to_string(i) + "]";
    if (v[i].is_string()) {
      if (v[i].get<std::string>() != "inf")
        fail(entry, "expected a number or \"inf\"");
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      out.push_back(as_number(v[i], entry));
    }
  }
  return out;
}

void require_keys(const json& obj, const std::string& path,
                  const std::vector<std::string>& required) {
  for (const auto& key : required)
    if (!obj.contains(key))
      fail(path.empty() ? key : path + "." + key, "required field is missing");
}

innodpc::StateSpaceModel parse_plant(const json& v, CliConfig& cfg) {
  if (v.is_string()) {
    const std::string name = v.get<std::string>();
    if (name != "benchmark-2x1" && name != "paper-2x1")
      fail("plant", "unknown built-in plant \"" + name + "\"");
    cfg.plant_name = name;
    return innodpc::benchmark_plant();
  }
  if (!v.is_object()) fail("plant", "expected a name or a matrix object");
  cfg.plant_name.clear();
  require_keys(v, "plant", {"a", "b", "c", "d"});
  innodpc::StateSpaceModel m;
  for (const auto& [key, value] : v.items()) {
    const std::string path = "plant." + key;
    if (key == "a") m.a = as_matrix(value, path);
    else if (key == "b") m.b = as_matrix(value, path);
    else if (key == "c") m.c = as_matrix(value, path);
    else if (key == "d") m.d = as_matrix(value, path);
    else if (key == "sigma_w") m.sigma_w = as_matrix(value, path);
    else if (key == "sigma_v") m.sigma_v = as_matrix(value, path);
    else fail(path, "unknown key");
  }
  if (m.sigma_w.size() == 0)
    m.sigma_w = 1e-4 * Matrix::Identity(m.a.rows(), m.a.rows());
  if (m.sigma_v.size() == 0)
    m.sigma_v = 4.5e-4 * Matrix::Identity(m.c.rows(), m.c.rows());
  m.validate();
  m.k = innodpc::solve_dare(m.a, m.c, m.sigma_w, m.sigma_v).gain;
  m.validate();
  return m;
}

void apply_config_file(const std::string& file, CliConfig& cfg) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config file: " + file);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) fail("", "top level must be an object");

  auto& e = cfg.exp;
  for (const auto& [key, value] : root.items()) {
    if (key == "plant") e.plant = parse_plant(value, cfg);
    else if (key == "q") cfg.q = as_number(value, key);
    else if (key == "zero_noise") cfg.zero_noise = as_bool(value, key);
    else if (key == "controller") cfg.controller = as_string(value, key);
    else if (key == "lambda") cfg.lambda = as_number(value, key);
    else if (key == "out") cfg.out = as_string(value, key);
    else if (key == "seed") e.base_seed = static_cast<std::uint64_t>(
        as_number(value, key));
    else if (key == "jobs") e.jobs = as_int(value, key);
    else if (key == "l_p") e.l_p = as_int(value, key);
    else if (key == "l_f") e.l_f = as_int(value, key);
    else if (key == "rho") e.rho = as_int(value, key);
    else if (key == "rho_sweep") e.rho_sweep = as_int_list(value, key);
    else if (key == "n") e.n = as_int(value, key);
    else if (key == "n_test") e.n_test = as_int(value, key);
    else if (key == "n_runs") e.n_runs = as_int(value, key);
    else if (key == "estimate_d") e.estimate_d = as_bool(value, key);
    else if (key == "q_values") e.q_values = as_number_list(value, key);
    else if (key == "snr_labels") {
      if (!value.is_array()) fail(key, "expected an array of strings");
      e.snr_labels.clear();
      for (std::size_t i = 0; i < value.size(); ++i)
        e.snr_labels.push_back(
            as_string(value[i], key + "[" + std::to_string(i) + "]"));
    }
    else if (key == "input_period") e.input_period = as_int(value, key);
    else if (key == "input_amplitude") e.input_amplitude = as_number(value, key);
    else if (key == "input_dither_var")
      e.input_dither_var = as_number(value, key);
    else if (key == "test_input_var") e.test_input_var = as_number(value, key);
    else if (key == "q_weight")
      e.q_weight = value.is_array() ? as_matrix(value, key)
                                    : Matrix::Identity(1, 1) *
                                          as_number(value, key);
    else if (key == "r_weight")
      e.r_weight = value.is_array() ? as_matrix(value, key)
                                    : Matrix::Identity(1, 1) *
                                          as_number(value, key);
    else if (key == "u_bound") {
      const double b = as_number(value, key);
      e.u_lo = Vector::Constant(1, -b);
      e.u_hi = Vector::Constant(1, b);
    }
    else if (key == "y_bound") {
      const double b = as_number(value, key);
      e.y_lo = Vector::Constant(1, -b);
      e.y_hi = Vector::Constant(1, b);
    }
    else if (key == "lambda_grid") e.lambda_grid = as_lambda_grid(value, key);
    else if (key == "lambda_y") e.lambda_y = as_number(value, key);
    else if (key == "n_validation_runs")
      e.n_validation_runs = as_int(value, key);
    else if (key == "lambda_margin") e.lambda_margin = as_number(value, key);
    else if (key == "demo_q") e.demo_q = as_number(value, key);
    else if (key == "demo_seed_budget") e.demo_seed_budget = as_int(value, key);
    else if (key == "demo_stable_steps")
      e.demo_stable_steps = as_int(value, key);
    else if (key == "demo_unstable_window")
      e.demo_unstable_window = as_int(value, key);
    else if (key == "slack_penalty") cfg.slack_penalty = as_number(value, key);
    else if (key == "qp_tol") cfg.qp_tol = as_number(value, key);
    else if (key == "qp_max_iter") cfg.qp_max_iter = as_int(value, key);
    else fail(key, "unknown key");
  }

  // Weight/box dimensions follow the plant when only scalars were given.
  const auto ny = e.plant.ny(), nu = e.plant.nu();
  if (e.q_weight.rows() == 1 && ny != 1)
    e.q_weight = e.q_weight(0, 0) * Matrix::Identity(ny, ny);
  if (e.r_weight.rows() == 1 && nu != 1)
    e.r_weight = e.r_weight(0, 0) * Matrix::Identity(nu, nu);
  if (e.u_lo.size() == 1 && nu != 1) {
    e.u_lo = Vector::Constant(nu, e.u_lo(0));
    e.u_hi = Vector::Constant(nu, e.u_hi(0));
  }
  if (e.y_lo.size() == 1 && ny != 1) {
    e.y_lo = Vector::Constant(ny, e.y_lo(0));
    e.y_hi = Vector::Constant(ny, e.y_hi(0));
  }
}

// Reset every protocol parameter to the canonical benchmark values, keeping
// only seed / output / parallelism from the surrounding configuration.
void apply_benchmark_preset(CliConfig& cfg) {
  innodpc::ExperimentConfig fresh;
  fresh.base_seed = cfg.exp.base_seed;
  fresh.jobs = cfg.exp.jobs;
  cfg.exp = std::move(fresh);
  cfg.plant_name = "benchmark-2x1";
  cfg.q = 1.13;
  cfg.zero_noise = false;
  cfg.lambda = 10.0;
  cfg.slack_penalty = 1e6;
  cfg.qp_tol = 1e-9;
  cfg.qp_max_iter = 10000;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

// Effective-configuration snapshot; rerunning with it reproduces the run.
std::string config_snapshot(const CliConfig& cfg) {
  nlohmann::ordered_json j;
  if (!cfg.plant_name.empty()) {
    j["plant"] = cfg.plant_name;
  } else {
    nlohmann::ordered_json p;
    p["a"] = matrix_to_json(cfg.exp.plant.a);
    p["b"] = matrix_to_json(cfg.exp.plant.b);
    p["c"] = matrix_to_json(cfg.exp.plant.c);
    p["d"] = matrix_to_json(cfg.exp.plant.d);
    p["sigma_w"] = matrix_to_json(cfg.exp.plant.sigma_w);
    p["sigma_v"] = matrix_to_json(cfg.exp.plant.sigma_v);
    j["plant"] = p;
  }
  j["q"] = cfg.q;
  j["zero_noise"] = cfg.zero_noise;
  j["controller"] = cfg.controller;
  j["lambda"] = cfg.lambda;
  j["seed"] = cfg.exp.base_seed;
  j["jobs"] = cfg.exp.jobs;
  j["l_p"] = cfg.exp.l_p;
  j["l_f"] = cfg.exp.l_f;
  j["rho"] = cfg.exp.rho;
  j["rho_sweep"] = cfg.exp.rho_sweep;
  j["n"] = cfg.exp.n;
  j["n_test"] = cfg.exp.n_test;
  j["n_runs"] = cfg.exp.n_runs;
  j["estimate_d"] = cfg.exp.estimate_d;
  j["q_values"] = cfg.exp.q_values;
  j["snr_labels"] = cfg.exp.snr_labels;
  j["input_period"] = cfg.exp.input_period;
  j["input_amplitude"] = cfg.exp.input_amplitude;
  j["input_dither_var"] = cfg.exp.input_dither_var;
  j["test_input_var"] = cfg.exp.test_input_var;
  j["q_weight"] = matrix_to_json(cfg.exp.q_weight);
  j["r_weight"] = matrix_to_json(cfg.exp.r_weight);
  j["u_bound"] = cfg.exp.u_hi(0);
  j["y_bound"] = cfg.exp.y_hi(0);
  json grid = json::array();
  for (double v : cfg.exp.lambda_grid) {
    if (std::isinf(v)) grid.push_back("inf");
    else grid.push_back(v);
  }
  j["lambda_grid"] = grid;
  j["lambda_y"] = cfg.exp.lambda_y;
  j["n_validation_runs"] = cfg.exp.n_validation_runs;
  j["lambda_margin"] = cfg.exp.lambda_margin;
  j["demo_q"] = cfg.exp.demo_q;
  j["demo_seed_budget"] = cfg.exp.demo_seed_budget;
  j["demo_stable_steps"] = cfg.exp.demo_stable_steps;
  j["demo_unstable_window"] = cfg.exp.demo_unstable_window;
  j["slack_penalty"] = cfg.slack_penalty;
  j["qp_tol"] = cfg.qp_tol;
  j["qp_max_iter"] = cfg.qp_max_iter;
  j["out"] = cfg.out;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Output-directory lock (advisory; one writer per directory)
// ---------------------------------------------------------------------------

class DirLock {
 public:
  DirLock(const std::filesystem::path& dir, bool force) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() +
                          ": " + ec.message());
    path_ = dir / ".innodpc.lock";
    if (std::filesystem::exists(path_)) {
      if (!force)
        throw IoError("output directory is locked (" + path_.string() +
                      "); another run may be writing here — remove the lock "
                      "or rerun with --force");
      std::filesystem::remove(path_, ec);
    }
    std::ofstream out(path_);
    if (!out) throw IoError("cannot create lock file " + path_.string());
    out << "innodpc\n";
    owned_ = true;
  }
  ~DirLock() {
    if (owned_) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

const char* status_name(innodpc::QpStatus s) {
  switch (s) {
    case innodpc::QpStatus::optimal: return "optimal";
    case innodpc::QpStatus::max_iter: return "max_iter";
    case innodpc::QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

struct Records {
  innodpc::Trajectory offline;
  Matrix offline_e;  // model-based innovations of the offline record
  innodpc::Trajectory test;
  Matrix test_e;
};

// The benchmark data protocol: square-wave + dither offline excitation over
// rho presample + n samples, then an i.i.d. Gaussian test record, all from
// the per-run seed layout used by the studies.
Records make_records(const CliConfig& cfg) {
  const auto& e = cfg.exp;
  const double q = cfg.zero_noise ? 0.0 : cfg.q;
  const std::uint64_t seed = e.base_seed;
  const Vector x0 = Vector::Zero(e.plant.nx());
  Records rec;
  const Matrix u_off = innodpc::gen_square_wave_input(
      e.input_period, e.input_amplitude, e.input_dither_var, e.rho + e.n,
      seed + 0);
  rec.offline = innodpc::simulate(e.plant, u_off,
                                  innodpc::NoiseSpec{seed + 1, q}, x0);
  rec.offline_e = innodpc::sskf_filter(e.plant, rec.offline.u, rec.offline.y,
                                       Vector::Zero(e.plant.nx()))
                      .e;
  const Matrix u_test = innodpc::gen_gaussian_input(
      e.test_input_var, e.n_test, seed + 2, static_cast<int>(e.plant.nu()));
  rec.test = innodpc::simulate(e.plant, u_test,
                               innodpc::NoiseSpec{seed + 3, q}, x0);
  rec.test_e = innodpc::sskf_filter(e.plant, rec.test.u, rec.test.y,
                                    Vector::Zero(e.plant.nx()))
                   .e;
  return rec;
}

innodpc::CsvTable trajectory_table(const innodpc::Trajectory& traj,
                                   const Matrix& e) {
  innodpc::CsvTable t;
  t.header.push_back("t");
  for (Eigen::Index i = 0; i < traj.u.rows(); ++i)
    t.header.push_back("u" + std::to_string(i));
  for (Eigen::Index i = 0; i < traj.y.rows(); ++i)
    t.header.push_back("y" + std::to_string(i));
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    t.header.push_back("e" + std::to_string(i));
  for (Eigen::Index k = 0; k < traj.length(); ++k) {
    std::vector<std::string> row;
    row.push_back(std::to_string(k));
    for (Eigen::Index i = 0; i < traj.u.rows(); ++i)
      row.push_back(innodpc::format_number(traj.u(i, k)));
    for (Eigen::Index i = 0; i < traj.y.rows(); ++i)
      row.push_back(innodpc::format_number(traj.y(i, k)));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      row.push_back(innodpc::format_number(e(i, k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_simulate(const CliConfig& cfg) {
  const Records rec = make_records(cfg);
  innodpc::write_csv(join_path(cfg.out, "offline.csv"),
                     trajectory_table(rec.offline, rec.offline_e));
  innodpc::write_csv(join_path(cfg.out, "test.csv"),
                     trajectory_table(rec.test, rec.test_e));
  std::string s;
  s += "simulate\n";
  s += "  plant: " + (cfg.plant_name.empty() ? std::string("custom")
                                             : cfg.plant_name) + "\n";
  s += "  q: " + innodpc::format_number(cfg.zero_noise ? 0.0 : cfg.q) + "\n";
  s += "  offline length: " + std::to_string(rec.offline.length()) +
       "  (presample " + std::to_string(cfg.exp.rho) + " + equations " +
       std::to_string(cfg.exp.n) + ")\n";
  s += "  test length: " + std::to_string(rec.test.length()) + "\n";
  s += "  offline snr_db: " +
       innodpc::format_number(innodpc::snr_db(rec.offline.y, rec.offline_e)) +
       "\n";
  innodpc::write_text_file(join_path(cfg.out, "simulate_summary.txt"), s);
  std::printf("%s", s.c_str());
  return 0;
}

int cmd_estimate(const CliConfig& cfg, bool force) {
  const Records rec = make_records(cfg);
  std::vector<int> candidates = cfg.exp.rho_sweep;
  if (candidates.empty()) candidates = {cfg.exp.rho};
  const auto rows = innodpc::sweep_rho(rec.offline.u, rec.offline.y,
                                       candidates, cfg.exp.l_p, cfg.exp.l_f);

  innodpc::CsvTable t;
  t.header = {"rho", "residual_norm", "theta_radius", "stable", "note"};
  std::string s = "estimate: VARX order sweep with the window-stability gate\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-6s %-14s %-14s %s\n", "rho",
                "residual", "theta_radius", "verdict");
  s += line;
  bool any_stable = false;
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.rho),
                      innodpc::format_number(r.residual_norm),
                      innodpc::format_number(r.theta_radius),
                      r.stable ? "1" : "0", r.note});
    std::snprintf(line, sizeof line, "  %-6d %-14.6g %-14.6g %s%s%s\n", r.rho,
                  r.residual_norm, r.theta_radius,
                  r.stable ? "STABLE" : "UNSTABLE",
                  r.note.empty() ? "" : "  — ", r.note.c_str());
    s += line;
    any_stable = any_stable || r.stable;
  }
  s += any_stable ? "  gate: at least one candidate order is certified\n"
                  : "  gate: no candidate order passed\n";
  innodpc::write_csv(join_path(cfg.out, "estimate.csv"), t);
  innodpc::write_text_file(join_path(cfg.out, "estimate_summary.txt"), s);
  std::printf("%s", s.c_str());
  if (!any_stable && !force)
    throw CertificateError(
        "no candidate order passed the stability gate (rerun with --force to "
        "ignore)");
  return 0;
}

int cmd_predict(const CliConfig& cfg, bool force) {
  const auto& e = cfg.exp;
  const Records rec = make_records(cfg);
  const innodpc::RecordPipeline pipe =
      innodpc::build_from_record(rec.offline.u, rec.offline.y, e.rho, e.rho,
                                 e.l_p, e.l_f, {}, e.estimate_d);
  const innodpc::Certificate cert =
      innodpc::check_certificate(pipe.predictor);
  if (!cert.is_schur) {
    if (!force)
      throw CertificateError(
          "predictor failed the stability certificate (theta radius " +
          innodpc::format_number(cert.radius) +
          " >= 1); rerun with --force to predict anyway");
    std::fprintf(stderr,
                 "warning: certificate failed (theta radius %s); --force "
                 "given, continuing\n",
                 innodpc::format_number(cert.radius).c_str());
  }

  const int n_instants = e.n_test - e.l_p - e.l_f + 1;
  if (n_instants < 1)
    throw ConfigError("n_test must be at least l_p + l_f for prediction");
  innodpc::OnlineState s;
  s.u_p = innodpc::stack_window(rec.test.u, e.l_p, e.l_p);
  s.y_p = innodpc::stack_window(rec.test.y, e.l_p, e.l_p);
  const innodpc::InitWindowResult init =
      innodpc::init_innovation_window(pipe.blocks, s.u_p, s.y_p);
  s.e_p = init.e_p0;
  s.t = e.l_p;
  const innodpc::OpenLoopLog log = innodpc::run_open_loop(
      pipe.predictor, s, rec.test.u, rec.test.y, e.l_p, n_instants);

  const auto ny = e.plant.ny();
  innodpc::CsvTable t;
  t.header = {"t", "step", "channel", "y_true", "y_hat"};
  for (int i = 0; i < n_instants; ++i)
    for (int st = 1; st <= e.l_f; ++st)
      for (Eigen::Index ch = 0; ch < ny; ++ch)
        t.rows.push_back(
            {std::to_string(e.l_p + i), std::to_string(st),
             std::to_string(ch),
             innodpc::format_number(rec.test.y(ch, e.l_p + i + st - 1)),
             innodpc::format_number(
                 log.predictions((st - 1) * ny + ch, i))});
  innodpc::write_csv(join_path(cfg.out, "predict_predictions.csv"), t);

  std::string sum = "predict: receding-window open-loop run\n";
  sum += "  theta radius: " + innodpc::format_number(cert.radius) + "\n";
  sum += "  window-init feasibility gap: " +
         innodpc::format_number(init.feasibility_gap) + "\n";
  sum += "  instants: " + std::to_string(n_instants) + "\n";
  for (int st = 1; st <= e.l_f; ++st) {
    Matrix y_true(ny, n_instants), y_hat(ny, n_instants);
    for (int i = 0; i < n_instants; ++i) {
      y_true.col(i) = rec.test.y.col(e.l_p + i + st - 1);
      y_hat.col(i) = log.predictions.block((st - 1) * ny, i, ny, 1);
    }
    sum += "  r2 step " + std::to_string(st) + ": " +
           innodpc::format_number(innodpc::r_squared(y_true, y_hat)) + "\n";
  }
  innodpc::write_text_file(join_path(cfg.out, "predict_summary.txt"), sum);
  std::printf("%s", sum.c_str());
  return 0;
}

int cmd_control(const CliConfig& cfg, bool force) {
  const auto& e = cfg.exp;
  const double q = cfg.zero_noise ? 0.0 : cfg.q;
  innodpc::ControllerConfig cc = e.controller_config();
  cc.slack_penalty = cfg.slack_penalty;
  cc.qp_tol = cfg.qp_tol;
  cc.qp_max_iter = cfg.qp_max_iter;

  // Build whatever the selected controller needs from the offline record.
  std::optional<innodpc::RecordPipeline> pipe;
  std::optional<innodpc::SpcPredictor> spc;
  std::optional<innodpc::RegDeepcController> reg;
  innodpc::ControllerSetup setup;
  if (cfg.controller != "sskf") {
    const Records rec = make_records(cfg);
    pipe = innodpc::build_from_record(rec.offline.u, rec.offline.y, e.rho,
                                      e.rho, e.l_p, e.l_f, {}, e.estimate_d);
  }
  if (cfg.controller == "sskf") {
    setup.kind = innodpc::ControllerKind::sskf_mpc;
    setup.model = &e.plant;
  } else if (cfg.controller == "inno") {
    const innodpc::Certificate cert =
        innodpc::check_certificate(pipe->predictor);
    if (!cert.is_schur && !force)
      throw CertificateError(
          "predictor failed the stability certificate (theta radius " +
          innodpc::format_number(cert.radius) +
          " >= 1); rerun with --force to control anyway");
    setup.kind = innodpc::ControllerKind::inno_deepc;
    setup.inno = &pipe->predictor;
  } else if (cfg.controller == "spc" ||
             (cfg.controller == "reg" && std::isinf(cfg.lambda))) {
    // lambda = inf delegates to the exact subspace controller.
    spc = innodpc::build_spc_predictor(pipe->blocks);
    setup.kind = innodpc::ControllerKind::spc;
    setup.spc = &*spc;
  } else if (cfg.controller == "reg") {
    cc.lambda = cfg.lambda;
    reg = innodpc::build_reg_deepc(pipe->blocks, cc);
    setup.kind = innodpc::ControllerKind::reg_deepc;
    setup.reg = &*reg;
  } else {
    throw ConfigError("config: controller: expected sskf | inno | spc | reg");
  }

  const innodpc::ClosedLoopLog log = innodpc::run_closed_loop(
      setup, e.plant, q, cc, e.n_test, e.base_seed);
  const innodpc::ControlCosts costs =
      innodpc::control_costs(log, e.q_weight, e.r_weight);

  innodpc::CsvTable t;
  t.header.push_back("k");
  const auto nu = e.plant.nu(), ny = e.plant.ny();
  for (Eigen::Index i = 0; i < ny; ++i)
    t.header.push_back("r" + std::to_string(i));
  for (Eigen::Index i = 0; i < nu; ++i)
    t.header.push_back("u" + std::to_string(i));
  for (Eigen::Index i = 0; i < ny; ++i)
    t.header.push_back("y" + std::to_string(i));
  for (Eigen::Index i = 0; i < ny; ++i)
    t.header.push_back("y_hat1_" + std::to_string(i));
  t.header.push_back("status");
  t.header.push_back("iterations");
  for (Eigen::Index k = 0; k < log.y.cols(); ++k) {
    std::vector<std::string> row{std::to_string(k + 1)};
    for (Eigen::Index i = 0; i < ny; ++i)
      row.push_back(innodpc::format_number(log.r(i, k)));
    for (Eigen::Index i = 0; i < nu; ++i)
      row.push_back(innodpc::format_number(log.u(i, k)));
    for (Eigen::Index i = 0; i < ny; ++i)
      row.push_back(innodpc::format_number(log.y(i, k)));
    for (Eigen::Index i = 0; i < ny; ++i)
      row.push_back(innodpc::format_number(log.y_hat_one(i, k)));
    row.push_back(status_name(log.status[static_cast<std::size_t>(k)]));
    row.push_back(std::to_string(log.qp_iterations[static_cast<std::size_t>(k)]));
    t.rows.push_back(std::move(row));
  }
  innodpc::write_csv(join_path(cfg.out, "closed_loop.csv"), t);

  std::string s = "control: single closed-loop run\n";
  s += "  controller: " + cfg.controller;
  if (cfg.controller == "reg")
    s += " (lambda " + innodpc::format_number(cfg.lambda) + ")";
  s += "\n";
  s += "  q: " + innodpc::format_number(q) + "\n";
  s += "  j_u: " + innodpc::format_number(costs.j_u) + "\n";
  s += "  j_y: " + innodpc::format_number(costs.j_y) + "\n";
  s += "  j_total: " + innodpc::format_number(costs.total()) + "\n";
  s += "  solver failures: " + std::to_string(log.solver_failures) + "\n";
  s += "  slack steps: " + std::to_string(log.slack_steps) + "\n";
  innodpc::write_text_file(join_path(cfg.out, "control_summary.txt"), s);
  std::printf("%s", s.c_str());
  return 0;
}

int cmd_benchmark(const CliConfig& cfg) {
  const auto& e = cfg.exp;
  std::printf("benchmark: %d runs x %zu SNRs (jobs %d)\n", e.n_runs,
              e.q_values.size(), e.jobs);

  const innodpc::PredictionStudyResult pred = innodpc::run_prediction_study(e);
  innodpc::emit_prediction_report(pred, cfg.out);
  std::printf("  prediction study: %zu rows, %zu exclusions\n",
              pred.rows.size(), pred.exclusions.size());

  const innodpc::ControlStudyResult ctrl = innodpc::run_control_study(e);
  innodpc::emit_control_report(ctrl, cfg.out);
  std::printf("  control study: %zu rows, %zu exclusions\n", ctrl.rows.size(),
              ctrl.exclusions.size());
  for (const auto& [snr, lam] : ctrl.selected_lambda)
    std::printf("  selected lambda %s: %s\n", snr.c_str(),
                innodpc::format_number(lam).c_str());

  const innodpc::DemoResult demo = innodpc::run_stability_demo(e);
  innodpc::emit_demo_report(demo, cfg.out);
  std::printf(
      "  stability demo: seed %llu, radii %.4f (order %d) vs %.4f (order "
      "%d)\n",
      static_cast<unsigned long long>(demo.seed), demo.radius_stable,
      demo.rho_stable, demo.radius_unstable, demo.rho_unstable);

  std::string s = "benchmark\n";
  s += "  runs: " + std::to_string(e.n_runs) + "\n";
  for (const auto& [snr, lam] : ctrl.selected_lambda)
    s += "  selected lambda " + snr + ": " + innodpc::format_number(lam) +
         "\n";
  s += "  prediction exclusions: " + std::to_string(pred.exclusions.size()) +
       "\n";
  s += "  control exclusions: " + std::to_string(ctrl.exclusions.size()) +
       "\n";
  s += "  demo seed: " + std::to_string(demo.seed) + " (tried " +
       std::to_string(demo.seeds_tried) + ")\n";
  innodpc::write_text_file(join_path(cfg.out, "benchmark_summary.txt"), s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "innodpc — innovation-based data-driven output prediction and "
      "predictive control"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> jobs_flag;
  bool paper = false, force = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--seed", seed_flag, "base seed (overrides the config)");
    sub->add_option("--out", out_flag,
                    "output directory (overrides the config)");
    sub->add_flag("--paper", paper,
                  "pin the canonical benchmark protocol parameters");
    sub->add_flag("--force", force,
                  "take over an existing output lock and override the "
                  "certificate gate");
    sub->add_option("--jobs", jobs_flag,
                    "worker threads for the studies (overrides the config)");
  };
  add_common(app.add_subcommand(
      "simulate", "generate offline and test records for the plant"));
  add_common(app.add_subcommand(
      "estimate", "VARX order sweep with the stability certificate"));
  add_common(app.add_subcommand(
      "predict", "receding-window open-loop prediction on a test record"));
  add_common(app.add_subcommand(
      "control", "one closed-loop run of the selected controller"));
  add_common(app.add_subcommand(
      "benchmark", "full Monte Carlo prediction/control/stability study"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CliConfig cfg;
    if (!config_path.empty()) apply_config_file(config_path, cfg);
    if (paper) apply_benchmark_preset(cfg);
    if (seed_flag) cfg.exp.base_seed = *seed_flag;
    if (jobs_flag) cfg.exp.jobs = *jobs_flag;
    if (!out_flag.empty()) cfg.out = out_flag;
    if (cfg.exp.jobs < 1)
      throw ConfigError("config: jobs: must be at least 1");

    const DirLock lock(cfg.out, force);
    innodpc::write_text_file(join_path(cfg.out, "config_used.json"),
                             config_snapshot(cfg));

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") return cmd_simulate(cfg);
    if (cmd == "estimate") return cmd_estimate(cfg, force);
    if (cmd == "predict") return cmd_predict(cfg, force);
    if (cmd == "control") return cmd_control(cfg, force);
    return cmd_benchmark(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const innodpc::DataLengthError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const CertificateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const innodpc::NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
