#pragma once

// Configuration-driven sweeps: parse a sectioned key = value config, run every
// (axis value, seed, method) cell, write a schema-versioned CSV, and fit
// log-log scaling slopes over the results.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "replearn/error.hpp"
#include "replearn/estimators.hpp"
#include "replearn/parallel.hpp"
#include "replearn/risk.hpp"
#include "replearn/taskgen.hpp"

namespace replearn {

struct MethodOptions {
  FitOptions lowdim{};
  FitOptions nuclear{.max_iter = 5000, .tol = 1e-12};
  FitOptions relu{.max_iter = 2000};
  // "oracle" = (2/n1)||X*(Z)||_2 from the stored noise, "default" = the
  // sigma-based formula, or a positive number.
  std::string nuclear_lambda = "oracle";
  std::size_t relu_width = 0;  // 0: twice the teacher width
  double relu_lambda = 1e-3;
  double nn_lambda = 1e-3;     // scratch baseline weight decay
  double target_r = std::numeric_limits<double>::quiet_NaN();
  std::size_t eval_samples = 20000;
};

struct SweepConfig {
  EnsembleSpec base_spec{};
  std::optional<double> target_sigma;  // target-task noise when it differs from the sources
  std::string sweep_id = "sweep";
  std::string axis = "n1";
  std::vector<double> values;
  std::size_t seeds_per_point = 1;
  std::vector<Method> methods;
  std::size_t nu_draws = 200;
  std::string output_path = "sweep.csv";
  bool record_runtime = false;
  MethodOptions method_options{};

  void validate() const {
    if (values.empty()) throw InvalidInput("sweep values must be nonempty");
    for (std::size_t i = 1; i < values.size(); ++i)
      if (!(values[i] > values[i - 1])) throw InvalidInput("sweep values must be strictly increasing");
    if (seeds_per_point < 1) throw InvalidInput("seeds_per_point must be >= 1");
    if (nu_draws < 1) throw InvalidInput("nu_draws must be >= 1");
    if (methods.empty()) throw InvalidInput("at least one method must be enabled");
    static const char* kAxes[] = {"d", "k", "T", "n1", "n2", "sigma", "c"};
    if (std::find(std::begin(kAxes), std::end(kAxes), axis) == std::end(kAxes))
      throw InvalidInput("unknown sweep axis '" + axis + "'");
  }
};

struct SweepRow {
  std::string sweep_id;
  std::string axis;
  double axis_value = 0.0;
  std::size_t seed = 0;
  Method method = Method::lowdim;
  std::size_t d = 0, k = 0, T = 0, n1 = 0, n2 = 0;
  double sigma = 0.0, c = 0.0;
  double er_mean = 0.0, er_se = 0.0, rep_term = 0.0, noise_term = 0.0, subspace_dist = 0.0;
  double kappa = 0.0;
  double runtime_ms = 0.0;
  std::string error_flag = "ok";

  // Numeric column by CSV name.
  double field(std::string_view name) const {
    if (name == "axis_value") return axis_value;
    if (name == "seed") return static_cast<double>(seed);
    if (name == "d") return static_cast<double>(d);
    if (name == "k") return static_cast<double>(k);
    if (name == "T") return static_cast<double>(T);
    if (name == "n1") return static_cast<double>(n1);
    if (name == "n2") return static_cast<double>(n2);
    if (name == "sigma") return sigma;
    if (name == "c") return c;
    if (name == "er_mean") return er_mean;
    if (name == "er_se") return er_se;
    if (name == "rep_term") return rep_term;
    if (name == "noise_term") return noise_term;
    if (name == "subspace_dist") return subspace_dist;
    if (name == "kappa") return kappa;
    if (name == "runtime_ms") return runtime_ms;
    throw InvalidInput("unknown numeric column '" + std::string(name) + "'");
  }
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_ = 0.0;
  double r_squared = 0.0;
};

namespace harness {

inline constexpr const char* kCsvColumns =
    "sweep_id,axis,axis_value,seed,method,d,k,T,n1,n2,sigma,c,er_mean,er_se,rep_term,"
    "noise_term,subspace_dist,kappa,runtime_ms,error_flag";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidInput(where + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw InvalidInput(where + ": '" + s + "' is not a number");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw InvalidInput(where + ": '" + s + "' is not a nonnegative integer");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw InvalidInput(where + ": '" + s + "' is out of range");
  }
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw InvalidInput(where + ": expected true or false, got '" + s + "'");
}

inline void apply_spec_key(EnsembleSpec& spec, std::optional<double>& target_sigma,
                           const std::string& key, const std::string& value,
                           const std::string& where) {
  if (key == "track") spec.track = parse_track(value);
  else if (key == "d") spec.d = parse_uint(value, where);
  else if (key == "k") spec.k = parse_uint(value, where);
  else if (key == "T") spec.T = parse_uint(value, where);
  else if (key == "n1") spec.n1 = parse_uint(value, where);
  else if (key == "n2") spec.n2 = parse_uint(value, where);
  else if (key == "sigma") spec.sigma = parse_double(value, where);
  else if (key == "target_sigma") target_sigma = parse_double(value, where);
  else if (key == "c") spec.c = parse_double(value, where);
  else if (key == "covariance_family") spec.covariance_family = parse_covariance_family(value);
  else if (key == "input_dist") spec.input_dist = parse_input_dist(value);
  else if (key == "master_seed") spec.master_seed = parse_uint(value, where);
  else throw InvalidInput(where + ": unknown key '" + key + "' in [spec]");
}

inline void apply_sweep_key(SweepConfig& cfg, const std::string& key, const std::string& value,
                            const std::string& where) {
  if (key == "sweep_id") cfg.sweep_id = value;
  else if (key == "axis") cfg.axis = value;
  else if (key == "values") {
    cfg.values.clear();
    for (const auto& v : split(value, ',')) cfg.values.push_back(parse_double(v, where));
  } else if (key == "seeds_per_point") cfg.seeds_per_point = parse_uint(value, where);
  else if (key == "nu_draws") cfg.nu_draws = parse_uint(value, where);
  else if (key == "output") cfg.output_path = value;
  else if (key == "record_runtime") cfg.record_runtime = parse_bool(value, where);
  else throw InvalidInput(where + ": unknown key '" + key + "' in [sweep]");
}

inline void apply_method_key(SweepConfig& cfg, const std::string& key, const std::string& value,
                             const std::string& where) {
  MethodOptions& m = cfg.method_options;
  static const char* kNames[] = {"lowdim", "nuclear", "relu", "baseline-ridge",
                                 "baseline-nn-scratch"};
  if (std::find(std::begin(kNames), std::end(kNames), key) != std::end(kNames)) {
    const Method method = parse_method(key);
    auto it = std::find(cfg.methods.begin(), cfg.methods.end(), method);
    const bool on = parse_bool(value, where);
    if (on && it == cfg.methods.end()) cfg.methods.push_back(method);
    if (!on && it != cfg.methods.end()) cfg.methods.erase(it);
    std::sort(cfg.methods.begin(), cfg.methods.end());
  } else if (key == "lowdim_max_iter") m.lowdim.max_iter = static_cast<int>(parse_uint(value, where));
  else if (key == "lowdim_tol") m.lowdim.tol = parse_double(value, where);
  else if (key == "lowdim_restarts") m.lowdim.restarts = static_cast<int>(parse_uint(value, where));
  else if (key == "nuclear_lambda") {
    if (value != "oracle" && value != "default" && !(parse_double(value, where) > 0.0))
      throw InvalidInput(where + ": nuclear_lambda must be oracle, default or > 0");
    m.nuclear_lambda = value;
  } else if (key == "nuclear_max_iter") m.nuclear.max_iter = static_cast<int>(parse_uint(value, where));
  else if (key == "relu_width") m.relu_width = parse_uint(value, where);
  else if (key == "relu_lambda") m.relu_lambda = parse_double(value, where);
  else if (key == "relu_max_iter") m.relu.max_iter = static_cast<int>(parse_uint(value, where));
  else if (key == "nn_lambda") m.nn_lambda = parse_double(value, where);
  else if (key == "target_r") m.target_r = parse_double(value, where);
  else if (key == "eval_samples") m.eval_samples = parse_uint(value, where);
  else throw InvalidInput(where + ": unknown key '" + key + "' in [methods]");
}

}  // namespace detail

inline SweepConfig parse_config(const std::string& text, const std::string& source = "config") {
  SweepConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw InvalidInput(where + ": malformed section header");
      section = t.substr(1, t.size() - 2);
      if (section != "spec" && section != "sweep" && section != "methods")
        throw InvalidInput(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidInput(where + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (section.empty()) throw InvalidInput(where + ": key '" + key + "' outside a section");
    if (section == "spec") detail::apply_spec_key(cfg.base_spec, cfg.target_sigma, key, value, where);
    else if (section == "sweep") detail::apply_sweep_key(cfg, key, value, where);
    else detail::apply_method_key(cfg, key, value, where);
  }
  cfg.validate();
  return cfg;
}

inline SweepConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

inline EnsembleSpec with_axis(EnsembleSpec spec, const std::string& axis, double value) {
  auto as_count = [&](double v) {
    if (!(v >= 0.0) || v != std::floor(v))
      throw InvalidInput("axis " + axis + " needs integer values, got " + format_double(v));
    return static_cast<std::size_t>(v);
  };
  if (axis == "d") spec.d = as_count(value);
  else if (axis == "k") spec.k = as_count(value);
  else if (axis == "T") spec.T = as_count(value);
  else if (axis == "n1") spec.n1 = as_count(value);
  else if (axis == "n2") spec.n2 = as_count(value);
  else if (axis == "sigma") spec.sigma = value;
  else if (axis == "c") spec.c = value;
  else throw InvalidInput("unknown sweep axis '" + axis + "'");
  return spec;
}

// ---------------------------------------------------------------------------
// Pipelines

inline double nuclear_lambda_for(const MethodOptions& m, const EnsembleSpec& spec,
                                 const GroundTruth& gt, const TaskBundle& b) {
  if (m.nuclear_lambda == "oracle") return std::max(estimators::oracle_nuclear_lambda(b), 1e-8);
  if (m.nuclear_lambda == "default")
    return std::max(estimators::default_nuclear_lambda(spec.sigma, spec.T, spec.n1,
                                                       gt.target_sigma()),
                    1e-8);
  return detail::parse_double(m.nuclear_lambda, "nuclear_lambda");
}

// Source-side fit for one method; baselines carry no representation.
inline FittedRepresentation fit_representation(Method method, const EnsembleSpec& spec,
                                               const GroundTruth& gt, const TaskBundle& b,
                                               const MethodOptions& m,
                                               FitResult* diagnostics = nullptr) {
  FittedRepresentation rep;
  rep.method = method;
  FitResult fit;
  switch (method) {
    case Method::lowdim:
      if (spec.track != Track::lowdim) throw InvalidInput("lowdim method needs the lowdim track");
      fit = estimators::fit_lowdim_mtl(b, spec.k, m.lowdim);
      rep.B_hat = fit.B_hat;
      break;
    case Method::nuclear:
      if (spec.track == Track::relu) throw InvalidInput("nuclear method needs a linear track");
      fit = estimators::fit_nuclear_mtl(b, nuclear_lambda_for(m, spec, gt, b), m.nuclear);
      rep.B_hat = fit.B_hat;
      break;
    case Method::relu: {
      if (spec.track != Track::relu) throw InvalidInput("relu method needs the relu track");
      FitOptions o = m.relu;
      o.seed = stream_seed(spec.master_seed, "relu_fit");
      const std::size_t width = m.relu_width ? m.relu_width : 2 * spec.k;
      fit = estimators::fit_relu_mtl(b, width, m.relu_lambda, o);
      rep.B_hat = estimators::rebalance_net(fit.B_hat, fit.W_hat).B;
      break;
    }
    case Method::baseline_ridge:
    case Method::baseline_nn_scratch: break;
  }
  if (diagnostics) *diagnostics = std::move(fit);
  return rep;
}

inline RiskOptions risk_options_for(const MethodOptions& m, const EnsembleSpec& spec,
                                    std::size_t nu_draws, std::uint64_t seed) {
  RiskOptions ro;
  ro.nu_draws = nu_draws;
  ro.seed = seed;
  ro.r = m.target_r;
  ro.eval_samples = m.eval_samples;
  ro.nn_width = m.relu_width ? m.relu_width : 2 * spec.k;
  ro.nn_lambda = m.nn_lambda;
  ro.nn_opts = m.relu;
  return ro;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const GenerationError*>(&e)) return "generation-failed";
  if (dynamic_cast<const InfeasibleFit*>(&e)) return "infeasible-fit";
  if (dynamic_cast<const SingularMatrix*>(&e)) return "singular-matrix";
  if (dynamic_cast<const InvalidInput*>(&e)) return "invalid-spec";
  return "error";
}

inline std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t seeds = cfg.seeds_per_point;
  const std::size_t cells = cfg.values.size() * seeds;
  std::vector<std::vector<SweepRow>> per_cell(cells);
  parallel_for(cells, [&](std::size_t cell) {
    const std::size_t vi = cell / seeds;
    const std::size_t si = cell % seeds;
    const double value = cfg.values[vi];
    std::vector<SweepRow>& out = per_cell[cell];

    SweepRow proto;
    proto.sweep_id = cfg.sweep_id;
    proto.axis = cfg.axis;
    proto.axis_value = value;
    proto.seed = si;
    EnsembleSpec spec = cfg.base_spec;
    std::optional<GroundTruth> gt;
    std::optional<TaskBundle> bundle;
    std::string setup_error;
    try {
      spec = with_axis(cfg.base_spec, cfg.axis, value);
      // Common random numbers: the cell stream depends on the seed index only.
      spec.master_seed = stream_seed(cfg.base_spec.master_seed, "cell", si);
      spec.validate();
      gt = sample_ground_truth(spec);
      bundle = sample_tasks(spec, *gt);
    } catch (const std::exception& e) {
      setup_error = error_kind(e);
    }
    proto.d = spec.d;
    proto.k = spec.k;
    proto.T = spec.T;
    proto.n1 = spec.n1;
    proto.n2 = spec.n2;
    proto.sigma = spec.sigma;
    proto.c = spec.c;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    proto.kappa = gt ? taskgen::condition_kappa(*gt) : nan;

    EnsembleSpec target_spec = spec;
    if (cfg.target_sigma) target_spec.sigma = *cfg.target_sigma;
    const std::uint64_t risk_seed = stream_seed(spec.master_seed, "risk");

    for (Method method : cfg.methods) {
      SweepRow row = proto;
      row.method = method;
      if (!setup_error.empty()) {
        row.er_mean = row.er_se = row.rep_term = row.noise_term = row.subspace_dist = nan;
        row.error_flag = setup_error;
        out.push_back(std::move(row));
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const FittedRepresentation rep =
            fit_representation(method, spec, *gt, *bundle, cfg.method_options);
        const RiskReport r = expected_excess_risk(
            target_spec, *gt, rep, risk_options_for(cfg.method_options, spec, cfg.nu_draws, risk_seed));
        row.er_mean = r.er_mean;
        row.er_se = r.er_se;
        row.rep_term = r.rep_term;
        row.noise_term = r.noise_term;
        row.subspace_dist = r.subspace_dist;
      } catch (const std::exception& e) {
        row.er_mean = row.er_se = row.rep_term = row.noise_term = row.subspace_dist = nan;
        row.error_flag = error_kind(e);
      }
      if (cfg.record_runtime)
        row.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out.push_back(std::move(row));
    }
  });

  std::vector<SweepRow> rows;
  for (auto& cell : per_cell)
    for (auto& r : cell) rows.push_back(std::move(r));
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.axis_value != b.axis_value) return a.axis_value < b.axis_value;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.method < b.method;
  });
  return rows;
}

inline void write_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "# schema=1\n" << kCsvColumns << '\n';
  for (const SweepRow& r : rows) {
    os << r.sweep_id << ',' << r.axis << ',' << format_double(r.axis_value) << ',' << r.seed << ','
       << to_string(r.method) << ',' << r.d << ',' << r.k << ',' << r.T << ',' << r.n1 << ','
       << r.n2 << ',' << format_double(r.sigma) << ',' << format_double(r.c) << ','
       << format_double(r.er_mean) << ',' << format_double(r.er_se) << ','
       << format_double(r.rep_term) << ',' << format_double(r.noise_term) << ','
       << format_double(r.subspace_dist) << ',' << format_double(r.kappa) << ','
       << format_double(r.runtime_ms) << ',' << r.error_flag << '\n';
  }
}

inline void write_csv_file(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open '" + path + "' for writing");
  write_csv(os, rows);
  if (!os) throw Error("write failed for '" + path + "'");
}

inline std::vector<SweepRow> read_csv(std::istream& is, const std::string& source = "csv") {
  std::string line;
  if (!std::getline(is, line) || line != "# schema=1")
    throw InvalidInput(source + ": missing '# schema=1' header");
  if (!std::getline(is, line) || line != kCsvColumns)
    throw InvalidInput(source + ": unexpected column header");
  std::vector<SweepRow> rows;
  int lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto f = detail::split(line, ',');
    if (f.size() != 20) throw InvalidInput(where + ": expected 20 fields");
    SweepRow r;
    r.sweep_id = f[0];
    r.axis = f[1];
    r.axis_value = detail::parse_double(f[2], where);
    r.seed = detail::parse_uint(f[3], where);
    r.method = parse_method(f[4]);
    r.d = detail::parse_uint(f[5], where);
    r.k = detail::parse_uint(f[6], where);
    r.T = detail::parse_uint(f[7], where);
    r.n1 = detail::parse_uint(f[8], where);
    r.n2 = detail::parse_uint(f[9], where);
    r.sigma = detail::parse_double(f[10], where);
    r.c = detail::parse_double(f[11], where);
    r.er_mean = detail::parse_double(f[12], where);
    r.er_se = detail::parse_double(f[13], where);
    r.rep_term = detail::parse_double(f[14], where);
    r.noise_term = detail::parse_double(f[15], where);
    r.subspace_dist = detail::parse_double(f[16], where);
    r.kappa = detail::parse_double(f[17], where);
    r.runtime_ms = detail::parse_double(f[18], where);
    r.error_flag = f[19];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<SweepRow> read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read '" + path + "'");
  return read_csv(is, path);
}

// ---------------------------------------------------------------------------
// Scaling fits

// OLS of log y on log x.
inline SlopeFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw InvalidInput("slope fit needs at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw InvalidInput("slope fit needs positive x and y values");
  const std::size_t m = x.size();
  std::vector<double> lx(m), ly(m);
  for (std::size_t i = 0; i < m; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidInput("slope fit needs at least 3 distinct x values");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - fit.intercept - fit.slope * lx[i];
    sse += r * r;
  }
  // Constant y: a flat line with nothing explained.
  const double scale = std::max(1.0, std::abs(my));
  if (syy <= 1e-24 * scale * scale * static_cast<double>(m)) {
    fit.slope = 0.0;
    fit.intercept = my;
    fit.r_squared = 0.0;
    fit.stderr_ = 0.0;
    return fit;
  }
  fit.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  fit.stderr_ = std::sqrt(std::max(sse, 0.0) / static_cast<double>(m - 2) / sxx);
  return fit;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Median of y over rows sharing an x value, per distinct x (ascending).
inline std::pair<std::vector<double>, std::vector<double>> median_curve(
    const std::vector<SweepRow>& rows, std::string_view x_field, std::string_view y_field) {
  std::map<double, std::vector<double>> groups;
  for (const SweepRow& r : rows) {
    if (r.error_flag != "ok") continue;
    groups[r.field(x_field)].push_back(r.field(y_field));
  }
  std::pair<std::vector<double>, std::vector<double>> out;
  for (auto& [x, ys] : groups) {
    out.first.push_back(x);
    out.second.push_back(median_of(ys));
  }
  return out;
}

// Log-log OLS of the seed-median of y_field against x_field. Rows flagged with
// an error are ignored.
inline SlopeFit fit_scaling_slope(const std::vector<SweepRow>& rows, std::string_view x_field,
                                  std::string_view y_field) {
  const auto [x, y] = median_curve(rows, x_field, y_field);
  if (x.size() < 3) throw InvalidInput("slope fit needs at least 3 distinct x values");
  return fit_log_log(x, y);
}

inline std::vector<SweepRow> rows_for(const std::vector<SweepRow>& rows, Method method) {
  std::vector<SweepRow> out;
  for (const SweepRow& r : rows)
    if (r.method == method) out.push_back(r);
  return out;
}

// Human-readable summary: per method, the seed-median curves and slope fits of
// er_mean and rep_term against the sweep axis.
inline void write_report(std::ostream& os, const std::string& label,
                         const std::vector<SweepRow>& rows) {
  if (rows.empty()) {
    os << "file=" << label << " rows=0\n";
    return;
  }
  std::vector<Method> methods;
  std::size_t errors = 0;
  for (const SweepRow& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    if (r.error_flag != "ok") ++errors;
  }
  std::sort(methods.begin(), methods.end());
  const std::string axis = rows.front().axis;
  os << "file=" << label << " sweep_id=" << rows.front().sweep_id << " axis=" << axis
     << " rows=" << rows.size() << " error_rows=" << errors << '\n';
  for (Method m : methods) {
    const auto sub = rows_for(rows, m);
    const auto [xs, er] = median_curve(sub, "axis_value", "er_mean");
    const auto rep = median_curve(sub, "axis_value", "rep_term").second;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      os << "  method=" << to_string(m) << ' ' << axis << '=' << format_double(xs[i])
         << " median_er=" << format_double(er[i]) << " median_rep_term=" << format_double(rep[i])
         << '\n';
    }
    for (const char* y : {"er_mean", "rep_term"}) {
      os << "  slope method=" << to_string(m) << " y=" << y << ' ';
      try {
        const SlopeFit f = fit_scaling_slope(sub, "axis_value", y);
        char buf[256];
        std::snprintf(buf, sizeof buf, "slope=%.6g stderr=%.6g intercept=%.6g r_squared=%.6g",
                      f.slope, f.stderr_, f.intercept, f.r_squared);
        os << buf << '\n';
      } catch (const InvalidInput& e) {
        os << "unavailable (" << e.what() << ")\n";
      }
    }
  }
}

}  // namespace harness

using harness::fit_scaling_slope;
using harness::run_sweep;

}  // namespace replearn
