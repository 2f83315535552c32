// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Sweep CSVs are written under ./acceptance_csv.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "replearn/replearn.hpp"

using namespace replearn;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) { return harness::median_of(std::move(v)); }

const std::filesystem::path kCsvDir = "acceptance_csv";

std::vector<SweepRow> sweep_and_save(const SweepConfig& cfg) {
  const auto rows = run_sweep(cfg);
  std::filesystem::create_directories(kCsvDir);
  harness::write_csv_file((kCsvDir / cfg.output_path).string(), rows);
  return rows;
}

bool all_ok(const std::vector<SweepRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.error_flag == "ok"; });
}

std::string slope_detail(const SlopeFit& f) {
  return fmt("slope=%.4f stderr=%.4f r_squared=%.4f", f.slope, f.stderr_, f.r_squared);
}

std::string curve_detail(const std::vector<SweepRow>& rows, const char* y) {
  const auto [x, m] = harness::median_curve(rows, "axis_value", y);
  std::string s = "medians=";
  for (std::size_t i = 0; i < x.size(); ++i) s += fmt("%s%g:%.4g", i ? "," : "", x[i], m[i]);
  return s;
}

// --------------------------------------------------------------------------

Verdict c1_identities() {
  const CheckOutcome a = lemmalab::check_move_x(200, 1);
  const CheckOutcome b = lemmalab::check_loewner(500, 1);
  const CheckOutcome c = lemmalab::check_cov_implies_div(200, 1);
  const CheckOutcome d = lemmalab::check_source_target_identity(
      lemmalab::suite_spec("source_target_identity"), 50, 1);
  const bool pass = a.pass_fraction == 1.0 && b.pass_fraction == 1.0 && c.pass_fraction == 1.0 &&
                    d.pass_fraction == 1.0;
  return {pass, fmt("move_x=%g loewner=%g cov_implies_div=%g source_target_identity=%g",
                    a.pass_fraction, b.pass_fraction, c.pass_fraction, d.pass_fraction)};
}

Verdict c2_noiseless_recovery() {
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    EnsembleSpec spec;
    spec.d = 20;
    spec.k = 3;
    spec.T = 10;
    spec.n1 = 40;
    spec.sigma = 0.0;
    spec.master_seed = stream_seed(2, "noiseless", s);
    const GroundTruth gt = sample_ground_truth(spec);
    const FitResult fit = fit_lowdim_mtl(sample_tasks(spec, gt), 3, FitOptions{});
    const double dist = subspace_distance(fit.B_hat, gt.B_star, gt.target_sigma());
    worst = std::max(worst, dist);
    ok += dist <= 1e-6;
  }
  return {ok >= 95, fmt("recovered=%d/100 worst_distance=%.3g", ok, worst)};
}

SweepConfig lowdim_base(const std::string& id) {
  SweepConfig cfg;
  cfg.sweep_id = id;
  cfg.output_path = id + ".csv";
  cfg.base_spec.d = 40;
  cfg.base_spec.k = 2;
  cfg.base_spec.T = 30;
  cfg.base_spec.n1 = 200;
  cfg.base_spec.n2 = 20;
  cfg.base_spec.sigma = 1.0;
  cfg.seeds_per_point = 30;
  cfg.nu_draws = 50;
  cfg.methods = {Method::lowdim};
  return cfg;
}

Verdict slope_verdict(const std::vector<SweepRow>& rows, const char* y, double lo, double hi,
                      double min_r2) {
  if (!all_ok(rows)) return {false, "sweep produced error rows"};
  const SlopeFit f = fit_scaling_slope(rows, "axis_value", y);
  const bool pass = f.slope >= lo && f.slope <= hi && f.r_squared >= min_r2;
  return {pass, slope_detail(f) + " " + curve_detail(rows, y)};
}

Verdict c3_n1_scaling() {
  SweepConfig cfg = lowdim_base("n1_scaling");
  cfg.base_spec.master_seed = 3;
  cfg.axis = "n1";
  cfg.values = {50, 100, 200, 400, 800};
  return slope_verdict(sweep_and_save(cfg), "rep_term", -1.35, -0.65, 0.9);
}

Verdict c4_T_scaling() {
  SweepConfig cfg = lowdim_base("T_scaling");
  cfg.base_spec.master_seed = 4;
  cfg.axis = "T";
  cfg.values = {8, 16, 32, 64};
  return slope_verdict(sweep_and_save(cfg), "rep_term", -1.35, -0.65, 0.0);
}

Verdict c5_n2_scaling() {
  SweepConfig cfg = lowdim_base("n2_scaling");
  cfg.base_spec.master_seed = 5;
  cfg.base_spec.sigma = 0.0;
  cfg.target_sigma = 1.0;
  cfg.axis = "n2";
  cfg.values = {10, 20, 40, 80, 160};
  cfg.seeds_per_point = 20;
  cfg.nu_draws = 100;
  return slope_verdict(sweep_and_save(cfg), "er_mean", -1.35, -0.65, 0.0);
}

Verdict c6_few_shot() {
  SweepConfig cfg;
  cfg.sweep_id = "few_shot";
  cfg.output_path = "few_shot.csv";
  cfg.base_spec.d = 100;
  cfg.base_spec.k = 2;
  cfg.base_spec.T = 25;
  cfg.base_spec.n1 = 1000;
  cfg.base_spec.n2 = 20;
  cfg.base_spec.sigma = 0.5;
  cfg.base_spec.master_seed = 6;
  cfg.axis = "n2";
  cfg.values = {20};
  cfg.seeds_per_point = 50;
  cfg.nu_draws = 100;
  cfg.methods = {Method::lowdim, Method::baseline_ridge};
  const auto rows = sweep_and_save(cfg);
  if (!all_ok(rows)) return {false, "sweep produced error rows"};
  std::vector<double> rep, base;
  for (const auto& r : rows) (r.method == Method::lowdim ? rep : base).push_back(r.er_mean);
  const double a = median(rep), b = median(base);
  return {a < constants::kFewShotFactor * b,
          fmt("median_er_lowdim=%.4g median_er_ridge=%.4g ratio=%.4f limit=%g", a, b, a / b,
              constants::kFewShotFactor)};
}

Verdict c7_norm_theta() {
  const CheckOutcome o = lemmalab::check_norm_theta(lemmalab::suite_spec("norm_theta"), 50, 7);
  return {o.skipped == 0 && o.pass_fraction == 1.0, o.report_line()};
}

Verdict c8_highdim_scaling() {
  SweepConfig cfg;
  cfg.sweep_id = "highdim_n1_scaling";
  cfg.output_path = "highdim_n1_scaling.csv";
  cfg.base_spec.track = Track::highdim;
  cfg.base_spec.d = 60;
  cfg.base_spec.k = 2;
  cfg.base_spec.T = 16;
  cfg.base_spec.n2 = 50;
  cfg.base_spec.sigma = 1.0;
  cfg.base_spec.master_seed = 8;
  cfg.axis = "n1";
  cfg.values = {100, 200, 400, 800, 1600};
  cfg.seeds_per_point = 20;
  cfg.nu_draws = 100;
  cfg.methods = {Method::nuclear};
  cfg.method_options.nuclear_lambda = "oracle";
  return slope_verdict(sweep_and_save(cfg), "er_mean", -0.8, -0.25, 0.0);
}

Verdict c9_kernel() {
  const CheckOutcome o =
      lemmalab::check_kernel_fixed_design(lemmalab::suite_spec("kernel_fixed_design"), 50, 9);
  return {o.pass_fraction == 1.0, o.report_line()};
}

Verdict c10_probabilistic() {
  std::vector<CheckOutcome> outs;
  outs.push_back(lemmalab::check_covariance_concentration(5, 0.05, 10));
  outs.push_back(lemmalab::check_covariance_concentration(20, 0.05, 10));
  outs.push_back(
      lemmalab::check_regularizer_bound(lemmalab::suite_spec("regularizer_bound"), 200, 0.05, 10));
  outs.push_back(
      lemmalab::check_matrix_deviation(lemmalab::suite_spec("matrix_deviation"), 200, 0.05, 10));
  bool pass = true;
  std::string detail;
  for (const auto& o : outs) {
    pass = pass && o.passed();
    detail += fmt("%s%s:freq=%.3f,constant=%s", detail.empty() ? "" : " ", o.name.c_str(),
                  o.pass_fraction,
                  o.calibrated_constant ? fmt("%.4g", *o.calibrated_constant).c_str() : "NA");
  }
  return {pass, detail};
}

Verdict c11_relu() {
  // Finite differences at 20 points with all preactivations away from the kink.
  Rng rng(11, "fd_points");
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  for (int t = 0; t < 4; ++t) {
    xs.push_back(rng.normal_matrix(15, 10));
    ys.push_back(rng.normal_vector(15));
  }
  const estimators::ReluProblem problem{xs, ys, 1e-3};
  double worst_fd = 0.0;
  int points = 0;
  while (points < 20) {
    estimators::ReluParams p{rng.normal_matrix(10, 6), rng.normal_matrix(6, 4)};
    bool clear = true;
    for (const auto& x : xs) clear = clear && (x * p.B).cwiseAbs().minCoeff() >= 1e-3;
    if (!clear) continue;
    ++points;
    const auto g = problem.gradient(p);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (int which = 0; which < 2; ++which) {
      Matrix& m = which ? p.W : p.B;
      const Matrix& gm = which ? g.W : g.B;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = problem.value(p);
        m.data()[i] = keep - h;
        const double down = problem.value(p);
        m.data()[i] = keep;
        const double fd = (up - down) / (2 * h);
        num += std::pow(fd - gm.data()[i], 2);
        den += fd * fd;
      }
    }
    worst_fd = std::max(worst_fd, std::sqrt(num / den));
  }

  // Rebalancing: outputs preserved, regularizer never increases.
  double worst_output = 0.0;
  bool never_increases = true;
  const Matrix x_eval = rng.normal_matrix(100, 10);
  for (int i = 0; i < 50; ++i) {
    Matrix b = rng.normal_matrix(10, 6);
    Matrix w = rng.normal_matrix(6, 3);
    for (Eigen::Index j = 0; j < 6; ++j) {
      const double s = std::pow(10.0, rng.uniform(-2.0, 2.0));
      b.col(j) *= s;
      w.row(j) /= s;
    }
    const auto r = rebalance_net(b, w);
    worst_output = std::max(worst_output, (taskgen::relu(x_eval * r.B) * r.W -
                                           taskgen::relu(x_eval * b) * w).cwiseAbs().maxCoeff());
    never_increases = never_increases && r.B.squaredNorm() + r.W.squaredNorm() <=
                                             b.squaredNorm() + w.squaredNorm() * (1.0 + 1e-15);
  }

  SweepConfig cfg;
  cfg.sweep_id = "relu_few_shot";
  cfg.output_path = "relu_few_shot.csv";
  cfg.base_spec.track = Track::relu;
  cfg.base_spec.d = 10;
  cfg.base_spec.k = 8;
  cfg.base_spec.T = 20;
  cfg.base_spec.n1 = 500;
  cfg.base_spec.n2 = 25;
  cfg.base_spec.sigma = 0.5;
  cfg.base_spec.master_seed = 11;
  cfg.axis = "n2";
  cfg.values = {25};
  cfg.seeds_per_point = 20;
  cfg.nu_draws = 20;
  cfg.methods = {Method::relu, Method::baseline_nn_scratch};
  cfg.method_options.relu_width = 16;
  cfg.method_options.relu_lambda = 1e-3;
  cfg.method_options.relu.max_iter = 2000;
  cfg.method_options.nn_lambda = 1e-3;
  cfg.method_options.eval_samples = 20000;
  const auto rows = sweep_and_save(cfg);
  if (!all_ok(rows)) return {false, "sweep produced error rows"};
  std::vector<double> rep, scratch;
  for (const auto& r : rows) (r.method == Method::relu ? rep : scratch).push_back(r.er_mean);
  const double a = median(rep), b = median(scratch);
  const bool pass = worst_fd <= 1e-5 && worst_output <= 1e-10 && never_increases && a < b;
  return {pass, fmt("fd_worst=%.3g rebalance_output_gap=%.3g regularizer_never_increases=%s "
                    "median_er_relu=%.4g median_er_scratch=%.4g",
                    worst_fd, worst_output, never_increases ? "true" : "false", a, b)};
}

Verdict c12_width() {
  const WidthEstimate sphere =
      gaussian_width_mc([](const Vector& g) { return g.norm(); }, 16, 100000, 12);
  const double analytic = std::sqrt(2.0) * std::exp(std::lgamma(8.5) - std::lgamma(8.0));
  const double rel = std::abs(sphere.estimate / analytic - 1.0);

  Rng rng(12, "width_design");
  std::vector<Matrix> xs;
  for (int t = 0; t < 5; ++t) xs.push_back(rng.normal_matrix(20, 10));
  const WidthEstimate w = linear_class_width(xs, 2, 200, 3, 12);
  const double bound =
      constants::kWidthConstant * (2.0 * 2 * 5 + 2.0 * 2 * 10 * std::log(20.0));
  return {rel <= 0.02 && w.estimate * w.estimate <= bound,
          fmt("sphere_rel_error=%.4f class_width_sq=%.4g bound=%.4g", rel,
              w.estimate * w.estimate, bound)};
}

Verdict c13_determinism() {
  SweepConfig cfg;
  cfg.sweep_id = "determinism";
  cfg.base_spec.d = 12;
  cfg.base_spec.k = 2;
  cfg.base_spec.T = 6;
  cfg.base_spec.n2 = 10;
  cfg.base_spec.sigma = 0.5;
  cfg.base_spec.master_seed = 13;
  cfg.axis = "n1";
  cfg.values = {30, 60, 120};
  cfg.seeds_per_point = 4;
  cfg.nu_draws = 10;
  cfg.methods = {Method::lowdim, Method::nuclear, Method::baseline_ridge};
  auto bytes = [&](const char* threads) {
    setenv("REPLEARN_THREADS", threads, 1);
    std::ostringstream os;
    harness::write_csv(os, run_sweep(cfg));
    return os.str();
  };
  const std::string a = bytes("1");
  const std::string b = bytes("3");
  const std::string c = bytes("1");
  unsetenv("REPLEARN_THREADS");

  SweepConfig relu = cfg;
  relu.base_spec.track = Track::relu;
  relu.base_spec.d = 5;
  relu.values = {30, 60};
  relu.seeds_per_point = 2;
  relu.nu_draws = 2;
  relu.methods = {Method::relu, Method::baseline_nn_scratch};
  relu.method_options.relu.max_iter = 100;
  relu.method_options.eval_samples = 500;
  std::ostringstream r1, r2;
  harness::write_csv(r1, run_sweep(relu));
  harness::write_csv(r2, run_sweep(relu));
  const bool pass = a == b && a == c && r1.str() == r2.str();
  return {pass, fmt("csv_bytes=%zu identical=%s", a.size(), pass ? "true" : "false")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "algebraic identities", 20, c1_identities},
      {2, "noiseless recovery", 60, c2_noiseless_recovery},
      {3, "n1 scaling of the representation term", 300, c3_n1_scaling},
      {4, "T scaling of the representation term", 300, c4_T_scaling},
      {5, "n2 scaling with a frozen representation", 120, c5_n2_scaling},
      {6, "few-shot advantage over ridge", 180, c6_few_shot},
      {7, "nuclear-norm source guarantee", 120, c7_norm_theta},
      {8, "high-dimensional n1 scaling", 360, c8_highdim_scaling},
      {9, "fixed-design kernel bounds", 60, c9_kernel},
      {10, "probabilistic bounds", 180, c10_probabilistic},
      {11, "relu track", 480, c11_relu},
      {12, "gaussian width", 120, c12_width},
      {13, "determinism", 60, c13_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && secs <= c.limit_s;
    failures += !pass;
    std::printf("criterion %2d %s: %s (%.1fs, limit %.0fs) %s\n", c.id,
                pass ? "PASS" : "FAIL", c.name, secs, c.limit_s, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
