#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "replearn/replearn.hpp"

namespace {

using namespace replearn;

struct SpecFlags {
  EnsembleSpec spec;
  std::string track = "lowdim";
  std::string covariance = "identity";
  std::string input = "gaussian";

  void attach(CLI::App* app) {
    app->add_option("--track", track, "lowdim | highdim | relu");
    app->add_option("--d", spec.d, "ambient (or input) dimension");
    app->add_option("--k", spec.k, "representation rank (teacher width on relu)");
    app->add_option("--T", spec.T, "number of source tasks");
    app->add_option("--n1", spec.n1, "samples per source task");
    app->add_option("--n2", spec.n2, "target samples");
    app->add_option("--sigma", spec.sigma, "label noise level");
    app->add_option("--c", spec.c, "covariance dominance constant in (0, 1]");
    app->add_option("--covariance", covariance, "identity | diagonal-decay | random-psd");
    app->add_option("--input", input, "gaussian | scaled-rademacher");
    app->add_option("--seed", spec.master_seed, "master seed");
  }

  EnsembleSpec resolve() {
    spec.track = parse_track(track);
    spec.covariance_family = parse_covariance_family(covariance);
    spec.input_dist = parse_input_dist(input);
    spec.validate();
    return spec;
  }
};

int cmd_gen(SpecFlags& flags, const std::string& out) {
  const EnsembleSpec spec = flags.resolve();
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  bundle_io::write_bundle_file(out, spec, b);
  std::printf("wrote %s d=%zu k=%zu T=%zu n1=%zu n2=%zu kappa=%.6g\n", out.c_str(), spec.d, spec.k,
              spec.T, spec.n1, spec.n2, taskgen::condition_kappa(gt));
  return 0;
}

int cmd_fit(SpecFlags& flags, const std::string& method_name, std::size_t nu_draws,
            const std::string& lambda, std::size_t width) {
  const EnsembleSpec spec = flags.resolve();
  const Method method = parse_method(method_name);
  MethodOptions m;
  if (!lambda.empty()) m.nuclear_lambda = lambda;
  m.relu_width = width;
  const GroundTruth gt = sample_ground_truth(spec);
  const TaskBundle b = sample_tasks(spec, gt);
  FitResult diag;
  const auto rep = harness::fit_representation(method, spec, gt, b, m, &diag);
  const RiskReport r = expected_excess_risk(
      spec, gt, rep,
      harness::risk_options_for(m, spec, nu_draws, stream_seed(spec.master_seed, "risk")));
  std::printf(
      "method=%s er_mean=%.10g er_se=%.6g rep_term=%.10g noise_term=%.10g subspace_dist=%.6g "
      "n_draws=%zu fit_iterations=%d fit_converged=%s\n",
      std::string(to_string(method)).c_str(), r.er_mean, r.er_se, r.rep_term, r.noise_term,
      r.subspace_dist, r.n_draws, diag.iterations, diag.converged ? "true" : "false");
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  const SweepConfig cfg = harness::load_config(config_path);
  std::filesystem::create_directories(out_dir);
  const auto rows = run_sweep(cfg);
  const std::string path = (std::filesystem::path(out_dir) / cfg.output_path).string();
  harness::write_csv_file(path, rows);
  const auto errors = std::count_if(rows.begin(), rows.end(),
                                    [](const SweepRow& r) { return r.error_flag != "ok"; });
  std::printf("wrote %s rows=%zu error_rows=%zd\n", path.c_str(), rows.size(),
              static_cast<std::ptrdiff_t>(errors));
  return 0;
}

int cmd_lemmas(const std::string& suite, std::uint64_t seed, std::size_t trials) {
  const auto outcomes = lemmalab::run_suite(suite, trials, seed);
  bool ok = true;
  for (const auto& o : outcomes) {
    std::printf("%s %s\n", o.passed() ? "PASS" : "FAIL", o.report_line().c_str());
    ok = ok && o.passed();
  }
  return ok ? 0 : 2;
}

int cmd_report(const std::string& in) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_regular_file(in)) {
    files.push_back(in);
  } else if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    throw InvalidInput("no such file or directory '" + in + "'");
  }
  if (files.empty()) throw InvalidInput("no .csv files under '" + in + "'");
  for (const auto& f : files) harness::write_report(std::cout, f.string(), harness::read_csv_file(f.string()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot representation learning laboratory"};
  app.require_subcommand(1);

  SpecFlags gen_flags;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "sample an ensemble and write its TaskBundle file");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "bundle path")->required();

  SpecFlags fit_flags;
  std::string method = "lowdim";
  std::size_t nu_draws = 200;
  std::string lambda;
  std::size_t width = 0;
  auto* fit = app.add_subcommand("fit", "fit one pipeline on one ensemble and print its risk");
  fit_flags.attach(fit);
  fit->add_option("--method", method,
                  "lowdim | nuclear | relu | baseline-ridge | baseline-nn-scratch");
  fit->add_option("--nu-draws", nu_draws, "target-weight draws");
  fit->add_option("--lambda", lambda, "nuclear lambda: oracle | default | value");
  fit->add_option("--width", width, "student width for relu methods (0: twice the teacher)");

  std::string config_path, out_dir;
  auto* sweep = app.add_subcommand("sweep", "run a configured sweep and write its CSV");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--out", out_dir, "output directory")->required();

  std::string suite;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  auto* lemmas = app.add_subcommand("lemmas", "run numeric lemma checks");
  lemmas->add_option("--suite", suite, "check name, or algebraic | probabilistic | all")
      ->required();
  lemmas->add_option("--seed", seed, "master seed");
  lemmas->add_option("--trials", trials, "trial count (0: per-check default)");

  std::string report_in;
  auto* report = app.add_subcommand("report", "summarize sweep CSVs with slope fits");
  report->add_option("--in", report_in, "directory of CSVs, or one CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen) return cmd_gen(gen_flags, gen_out);
    if (*fit) return cmd_fit(fit_flags, method, nu_draws, lambda, width);
    if (*sweep) return cmd_sweep(config_path, out_dir);
    if (*lemmas) return cmd_lemmas(suite, seed, trials);
    if (*report) return cmd_report(report_in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
