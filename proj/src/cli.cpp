#include "qpe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qpe/errors.hpp"
#include "qpe/estimate.hpp"
#include "qpe/models.hpp"
#include "qpe/record.hpp"
#include "qpe/spectral.hpp"

namespace qpe {

using nlohmann::json;

namespace {

// ---- parsing helpers -------------------------------------------------------

double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw InvalidParam("cannot parse " + what + " '" + text + "'");
  }
  return v;
}

GridSpec parse_grid(const std::string& text, const std::string& what) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) {
    throw InvalidParam(what + " must look like lo:hi:n, got '" + text + "'");
  }
  const double n = parse_number(parts[2], what + " point count");
  if (n != std::floor(n) || n < 1 || n > 1e7) {
    throw InvalidParam(what + " point count must be a positive integer");
  }
  GridSpec g{parse_number(parts[0], what), parse_number(parts[1], what),
             static_cast<int>(n)};
  g.points();  // validates
  return g;
}

ParamMap parse_assignments(const std::vector<std::string>& items) {
  ParamMap out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidParam("expected key=value, got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    out[key] = parse_number(item.substr(eq + 1), key);
  }
  return out;
}

json grid_json(const GridSpec& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"n", g.n}}; }

GridSpec grid_from(const json& j) {
  return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("n").get<int>()};
}

LossKind loss_kind(const std::string& name, bool normalize) {
  if (name == "oracle") return {LossVariant::kOracleMean, normalize};
  if (name == "residual") return {LossVariant::kRecordResidual, normalize};
  throw InvalidParam("--loss must be 'oracle' or 'residual', got '" + name + "'");
}

// ---- output helpers --------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write to " + path + " failed");
}

json output_header(const json& config, const char* output) {
  return {{"output", output}, {"config", config}};
}

// ---- model / problem setup -------------------------------------------------

ModelSpec model_for_record(const TrajectoryRecord& rec, const json& config,
                           const std::vector<std::string>& free) {
  ParamMap overrides = rec.meta.fixed;
  for (const auto& [k, v] : rec.meta.params) overrides[k] = v;
  for (const auto& [k, v] : config.at("set").items()) overrides[k] = v.get<double>();
  return make_model(rec.meta.model, overrides, free);
}

EstimationProblem problem_for(const json& config,
                              const std::vector<std::string>& free,
                              int threads) {
  TrajectoryRecord rec = read_record(config.at("traj").get<std::string>());
  ModelSpec model = model_for_record(rec, config, free);
  EstimationProblem p{std::move(model), std::move(rec), {}, {}};
  p.settings.kind = loss_kind(config.at("loss").get<std::string>(),
                              config.at("normalize").get<bool>());
  p.settings.stepper.dt = config.at("dt").get<double>();
  p.settings.stepper.burn_in_time = config.at("burn_in").get<double>();
  p.settings.threads = threads;
  return p;
}

double resolve_burn_in(const std::string& flag, bool matched,
                       const TrajectoryRecord& rec) {
  if (matched) return 0.0;
  if (flag == "auto") {
    if (!(rec.meta.kappa > 0.0)) {
      throw InvalidParam("cannot derive a burn-in from kappa = 0; pass --burn-in");
    }
    return 2.0 / rec.meta.kappa;
  }
  const double b = parse_number(flag, "--burn-in");
  if (!(b >= 0.0)) throw InvalidParam("--burn-in must be >= 0");
  return b;
}

json param_json(const ParamPoint& p) { return p.values; }

json failures_json(const LossSurface& s) {
  json out = json::array();
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (s.failed(i)) out.push_back({{"index", i}, {"message", s.failures[i]}});
  }
  return out;
}

// ---- commands --------------------------------------------------------------

void exec_simulate(const json& config, const OutputPaths& outputs,
                   std::ostream& out) {
  ParamMap params;
  for (const auto& [k, v] : config.at("params").items()) params[k] = v.get<double>();
  const std::string name = config.at("model").get<std::string>();
  // Split the assignments into model overrides and the truth point so that
  // the defaults of the free parameters can be overridden too.
  ModelSpec model = make_model(name, params);
  ParamMap truth;
  for (const auto& n : model.param_names) truth[n] = model.fixed.at(n);
  StepperConfig stepper;
  stepper.dt = config.at("dt").get<double>();
  std::vector<std::string> warnings;
  const TrajectoryRecord rec = simulate_experiment(
      model, truth, stepper, config.at("tau").get<double>(),
      config.at("seed").get<std::uint64_t>(), config.at("emit_truth").get<bool>(),
      &warnings);
  for (const auto& w : warnings) std::cerr << w << '\n';
  if (!outputs.out.empty()) write_record(rec, outputs.out);

  double mean = 0.0;
  for (double v : rec.currents) mean += v;
  mean /= static_cast<double>(rec.size());
  double var = 0.0;
  for (std::size_t j = 0; j < rec.size(); ++j) {
    const double r = rec.currents[j] - (rec.has_truth() ? (*rec.truth)[j] : mean);
    var += r * r;
  }
  var /= static_cast<double>(rec.size() - 1);
  out << "samples " << rec.size() << "\n"
      << "mean_current " << format_double(mean) << "\n"
      << "noise_level " << format_double(std::sqrt(var)) << "\n"
      << "expected_noise_level "
      << format_double(1.0 / std::sqrt(4.0 * rec.meta.kappa * rec.meta.eta *
                                       rec.meta.dt))
      << "\n";
}

void exec_estimate(const json& config, const OutputPaths& outputs, int threads,
                   std::ostream& out) {
  const std::string param = config.at("param").get<std::string>();
  const EstimationProblem problem = problem_for(config, {param}, threads);
  const LossSurface coarse = sweep_1d(problem, param, grid_from(config.at("grid")));
  const int rounds = config.at("refine").get<int>();
  std::vector<LossSurface> history{coarse};
  LossSurface final_surface = coarse;
  if (rounds > 0) {
    final_surface = refine_min(problem, coarse, rounds,
                               config.at("shrink").get<double>(), &history);
  }

  if (!outputs.out.empty()) {
    Table t;
    t.header = output_header(config, "surface");
    t.columns = {"round", param, "loss", "failed"};
    for (std::size_t r = 0; r < history.size(); ++r) {
      const LossSurface& s = history[r];
      for (std::size_t i = 0; i < s.grid.size(); ++i) {
        t.rows.push_back({static_cast<double>(r), s.grid[i].values[0],
                          s.losses[i], s.failed(i) ? 1.0 : 0.0});
      }
    }
    json failures = json::array();
    for (std::size_t r = 0; r < history.size(); ++r) {
      for (auto f : failures_json(history[r])) {
        f["round"] = r;
        failures.push_back(f);
      }
    }
    t.header["failures"] = failures;
    write_table(t, outputs.out);
  }

  if (!outputs.sensitivity.empty()) {
    const SensitivityCurve c = sensitivity(coarse);
    Table t;
    t.header = output_header(config, "sensitivity");
    t.header["peak"] = c.lambdas[c.peak_index];
    t.columns = {param, "dloss", "inverse", "flagged"};
    for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
      t.rows.push_back({c.lambdas[i], c.dloss[i], c.inverse[i],
                        c.flagged[i] ? 1.0 : 0.0});
    }
    write_table(t, outputs.sensitivity);
  }

  json summary = output_header(config, "summary");
  summary["param"] = param;
  summary["argmin"] = final_surface.argmin_point.values[0];
  summary["best_loss"] = final_surface.best_loss;
  const auto& last = final_surface.refinement_trace.back();
  summary["final_bracket"] = {last.bounds[0].first, last.bounds[0].second};
  json trace = json::array();
  for (const auto& r : final_surface.refinement_trace) {
    trace.push_back({{"bracket", {r.bounds[0].first, r.bounds[0].second}},
                     {"argmin", r.argmin.values[0]},
                     {"best_loss", r.best_loss}});
  }
  summary["rounds"] = trace;
  const std::string text = summary.dump() + "\n";
  if (!outputs.summary.empty()) {
    write_text(outputs.summary, text);
  } else {
    out << text;
  }
}

void exec_sweep2d(const json& config, const OutputPaths& outputs, int threads,
                  std::ostream& out) {
  const auto params = config.at("params").get<std::vector<std::string>>();
  if (params.size() != 2) throw InvalidParam("sweep2d needs two parameters");
  const EstimationProblem problem = problem_for(config, params, threads);
  const LossSurface s =
      sweep_2d(problem, {params[0], params[1]}, grid_from(config.at("grid_x")),
               grid_from(config.at("grid_y")));
  Table t;
  t.header = output_header(config, "sweep2d");
  t.header["argmin"] = param_json(s.argmin_point);
  t.header["best_loss"] = s.best_loss;
  t.header["failures"] = failures_json(s);
  t.columns = {params[0], params[1], "loss", "failed"};
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    t.rows.push_back({s.grid[i].values[0], s.grid[i].values[1], s.losses[i],
                      s.failed(i) ? 1.0 : 0.0});
  }
  if (!outputs.out.empty()) write_table(t, outputs.out);
  out << "argmin " << params[0] << "=" << format_double(s.argmin_point.values[0])
      << " " << params[1] << "=" << format_double(s.argmin_point.values[1])
      << " loss=" << format_double(s.best_loss) << "\n";
}

void exec_robustness(const json& config, const OutputPaths& outputs,
                     int threads, std::ostream& out) {
  const std::string param = config.at("param").get<std::string>();
  const EstimationProblem problem = problem_for(config, {param}, threads);
  const std::string mode = config.at("perturb").get<std::string>();
  Perturbation perturb;
  if (mode == "alpha") {
    perturb = Perturbation::kAlpha;
  } else if (mode == "omega0") {
    perturb = Perturbation::kOmega0;
  } else {
    throw InvalidParam("--perturb must be 'alpha' or 'omega0'");
  }
  const auto eps = grid_from(config.at("range")).points();
  const RefineSettings refine{grid_from(config.at("grid")),
                              config.at("refine").get<int>(),
                              config.at("shrink").get<double>()};
  const auto rows = robustness_scan(problem, param, config.at("truth").get<double>(),
                                    perturb, eps, refine);
  Table t;
  t.header = output_header(config, "robustness");
  t.columns = {"epsilon", "estimate", "percent_error"};
  for (const auto& r : rows) {
    t.rows.push_back({r.epsilon, r.estimate, r.percent_error});
    out << "epsilon " << format_double(r.epsilon) << " estimate "
        << format_double(r.estimate) << " percent_error "
        << format_double(r.percent_error) << "\n";
  }
  if (!outputs.out.empty()) write_table(t, outputs.out);
}

void exec_spectrum(const json& config, const OutputPaths& outputs, int threads,
                   std::ostream& out) {
  std::vector<std::string> names;
  ParamPoint point;
  for (const auto& [k, v] : config.at("point").items()) {
    names.push_back(k);
    point.values.push_back(v.get<double>());
  }
  if (names.empty()) throw InvalidParam("spectrum needs a parameter point");
  EstimationProblem problem = problem_for(config, names, threads);
  const EstimatorRun run = run_at(problem, point);
  const double burn_in = config.at("burn_in").get<double>();
  std::vector<double> residual;
  for (std::size_t j = 0; j < problem.record.size(); ++j) {
    if (problem.record.times[j] < burn_in) continue;
    residual.push_back(problem.record.currents[j] - run.cond_means[j]);
  }
  const std::string window_name = config.at("window").get<std::string>();
  Window window;
  if (window_name == "hann") {
    window = Window::kHann;
  } else if (window_name == "rect") {
    window = Window::kRectangular;
  } else {
    throw InvalidParam("--window must be 'hann' or 'rect'");
  }
  const Psd psd = periodogram(residual, problem.record.meta.dt,
                              config.at("segments").get<int>(), window);
  // Mid band: the middle half of the non-DC bins.
  const std::size_t lo = std::max<std::size_t>(1, psd.size() / 4);
  const std::size_t hi = std::max(lo + 1, 3 * psd.size() / 4);
  double level = 0.0;
  for (std::size_t i = lo; i < hi; ++i) level += psd.values[i];
  level /= static_cast<double>(hi - lo);
  const double expected =
      1.0 / (2.0 * problem.record.meta.kappa * problem.record.meta.eta);

  Table t;
  t.header = output_header(config, "spectrum");
  t.header["midband_level"] = level;
  t.header["expected_level"] = expected;
  t.columns = {"omega", "psd"};
  for (std::size_t i = 0; i < psd.size(); ++i) {
    t.rows.push_back({psd.frequencies[i], psd.values[i]});
  }
  if (!outputs.out.empty()) write_table(t, outputs.out);
  out << "midband_level " << format_double(level) << "\n"
      << "expected_level " << format_double(expected) << "\n"
      << "ratio " << format_double(level / expected) << "\n";
}

void exec_qcrb(const json& config, const OutputPaths& outputs,
               std::ostream& out) {
  const GridSpec grid = grid_from(config.at("omega"));
  const auto freqs = grid.points();
  const double s_fba = config.at("s_fba").get<double>();
  const double s_th = config.at("s_th").get<double>();
  if (!(s_fba > 0.0) || !(s_th >= 0.0)) {
    throw InvalidParam("--s-fba must be > 0 and --s-th >= 0");
  }
  QcrbInputs in;
  in.chi2 = damped_susceptibility2(freqs, config.at("omega0").get<double>(),
                                   config.at("gamma").get<double>());
  in.s_fba = Psd{freqs, std::vector<double>(freqs.size(), s_fba)};
  const json& sf = config.at("s_f");
  if (sf.is_string()) {
    in.s_f = SymbolicInfinite{};
  } else {
    in.s_f = Psd{freqs, std::vector<double>(freqs.size(), sf.get<double>())};
  }
  // Total force noise: backaction, imprecision referred to force, thermal.
  in.s_z.frequencies = freqs;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    in.s_z.values.push_back(s_fba + 1.0 / (4.0 * in.chi2.values[i] * s_fba) + s_th);
  }
  const Psd bound = qcrb_spectral_bound(in);
  const Psd integrand = smoothing_integrand(in.s_z, in.s_f);
  const auto band = config.at("band").get<std::vector<double>>();
  const Band b{band.at(0), band.at(1)};
  const double smoothing = smoothing_variance_bound(in.s_z, in.s_f, b);
  const double tau = config.at("tau").get<double>();
  const double bw = bandwidth_variance(in.s_z, Bandwidth::integration_time(tau), b);

  Table t;
  t.header = output_header(config, "qcrb");
  t.header["smoothing_variance"] = smoothing;
  t.header["bandwidth_variance"] = bw;
  t.columns = {"omega", "chi2", "qcrb_bound", "smoothing_integrand", "s_z",
               "two_s_z"};
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    t.rows.push_back({freqs[i], in.chi2.values[i], bound.values[i],
                      integrand.values[i], in.s_z.values[i],
                      2.0 * in.s_z.values[i]});
  }
  if (!outputs.out.empty()) write_table(t, outputs.out);
  out << "smoothing_variance " << format_double(smoothing) << "\n"
      << "bandwidth_variance " << format_double(bw) << "\n";
}

// Config for re-simulating a `.qpetraj` file from its own header.
json simulate_config_from_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string header_line, first_row;
  std::getline(in, header_line);
  std::getline(in, first_row);
  RecordMeta meta;
  try {
    meta = record_meta_from_header(json::parse(header_line));
  } catch (const json::exception& e) {
    throw FormatError(std::string("line 1: ") + e.what());
  }
  json params = json::object();
  for (const auto& [k, v] : meta.fixed) params[k] = v;
  for (const auto& [k, v] : meta.params) params[k] = v;
  const bool truth =
      std::count(first_row.begin(), first_row.end(), ',') == 2;
  return {{"command", "simulate"}, {"model", meta.model}, {"params", params},
          {"dt", meta.dt},         {"tau", meta.tau},     {"seed", meta.seed},
          {"emit_truth", truth}};
}

}  // namespace

void execute_config(const json& config, const OutputPaths& outputs, int threads,
                    std::ostream& out) {
  try {
    const std::string cmd = config.at("command").get<std::string>();
    if (cmd == "simulate") return exec_simulate(config, outputs, out);
    if (cmd == "estimate") return exec_estimate(config, outputs, threads, out);
    if (cmd == "sweep2d") return exec_sweep2d(config, outputs, threads, out);
    if (cmd == "robustness") return exec_robustness(config, outputs, threads, out);
    if (cmd == "spectrum") return exec_spectrum(config, outputs, threads, out);
    if (cmd == "qcrb") return exec_qcrb(config, outputs, out);
    throw InvalidParam("unknown command '" + cmd + "' in config");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalBlowup*>(&e) ||
      dynamic_cast<const NonPhysicalState*>(&e)) {
    return kExitNumeric;
  }
  if (dynamic_cast<const MissingTruth*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const EmptyRecord*>(&e) ||
      dynamic_cast<const DtMismatch*>(&e) || dynamic_cast<const AlignmentError*>(&e) ||
      dynamic_cast<const TooFewSamples*>(&e)) {
    return kExitData;
  }
  if (dynamic_cast<const BracketCollapse*>(&e) ||
      dynamic_cast<const AllPointsFailed*>(&e)) {
    return kExitSearch;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Single-trajectory quantum parameter estimation toolkit", "qpe"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read flags from a TOML/INI file");
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads for sweeps (0 = all cores)")
      ->envname("QPE_THREADS")
      ->check(CLI::NonNegativeNumber);

  OutputPaths outputs;
  json config;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Synthesize a measurement record");
  std::string sim_model = "levitated";
  std::vector<std::string> sim_params;
  double sim_dt = 1e-3, sim_tau = 20.0;
  std::uint64_t sim_seed = 0;
  int sim_dim = 0;
  bool sim_truth = false;
  sim->add_option("--model", sim_model, "Model name")->capture_default_str();
  sim->add_option("--param", sim_params, "Parameter override key=value");
  sim->add_option("--dt", sim_dt, "Time step")->capture_default_str();
  sim->add_option("--tau", sim_tau, "Record duration")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Base seed")->capture_default_str();
  sim->add_option("--dim", sim_dim, "Fock space dimension");
  sim->add_flag("--emit-truth", sim_truth, "Store the noise-free conditional mean");
  sim->add_option("--out", outputs.out, "Output .qpetraj path")->required();

  // shared estimation flags
  struct EstimationFlags {
    std::string traj, loss = "oracle", burn_in = "auto";
    std::vector<std::string> set;
    bool normalize = false, matched = false;
    double dt = 0.0;
  };
  auto add_estimation_flags = [](CLI::App* c, EstimationFlags& f) {
    c->add_option("--traj", f.traj, "Input .qpetraj record")->required();
    c->add_option("--loss", f.loss, "oracle | residual")->capture_default_str();
    c->add_flag("--normalize", f.normalize, "Divide the loss by the sample count");
    c->add_option("--burn-in", f.burn_in, "Excluded initial duration, or auto (2/kappa)")
        ->capture_default_str();
    c->add_flag("--matched", f.matched, "Initial state known exactly: burn-in 0");
    c->add_option("--set", f.set, "Override a filter model parameter key=value");
    c->add_option("--dt", f.dt, "Estimator step (must divide the record dt)");
  };
  auto estimation_config = [](const char* cmd, const EstimationFlags& f,
                              const std::string& burn_mode) {
    const TrajectoryRecord rec = read_record(f.traj);
    json set = json::object();
    for (const auto& [k, v] : parse_assignments(f.set)) set[k] = v;
    loss_kind(f.loss, f.normalize);
    return json{{"command", cmd},
                {"traj", f.traj},
                {"loss", f.loss},
                {"normalize", f.normalize},
                {"burn_in", resolve_burn_in(burn_mode, f.matched, rec)},
                {"set", set},
                {"dt", f.dt}};
  };

  // estimate
  auto* est = app.add_subcommand("estimate", "1-D loss sweep with refinement");
  EstimationFlags est_flags;
  std::string est_param = "f", est_grid;
  int est_refine = 3;
  double est_shrink = 10.0;
  add_estimation_flags(est, est_flags);
  est->add_option("--param", est_param, "Free parameter")->capture_default_str();
  est->add_option("--grid", est_grid, "lo:hi:n")->required();
  est->add_option("--refine", est_refine, "Refinement rounds (0 = none)")
      ->capture_default_str();
  est->add_option("--shrink", est_shrink, "Bracket shrink per round")
      ->capture_default_str();
  est->add_option("--out", outputs.out, "Loss surface CSV")->required();
  est->add_option("--summary", outputs.summary, "Summary JSON (default: stdout)");
  est->add_option("--sensitivity", outputs.sensitivity, "Sensitivity CSV");

  // sweep2d
  auto* s2 = app.add_subcommand("sweep2d", "Joint 2-D loss sweep");
  EstimationFlags s2_flags;
  std::string s2_x = "omega0", s2_y = "f", s2_gx, s2_gy;
  add_estimation_flags(s2, s2_flags);
  s2->add_option("--x", s2_x, "First parameter")->capture_default_str();
  s2->add_option("--y", s2_y, "Second parameter")->capture_default_str();
  s2->add_option("--grid-x", s2_gx, "lo:hi:n for the first parameter")->required();
  s2->add_option("--grid-y", s2_gy, "lo:hi:n for the second parameter")->required();
  s2->add_option("--out", outputs.out, "Output CSV")->required();

  // robustness
  auto* rob = app.add_subcommand("robustness", "Estimation error under model errors");
  EstimationFlags rob_flags;
  std::string rob_param = "f", rob_perturb = "alpha", rob_range, rob_grid;
  int rob_refine = 3;
  double rob_shrink = 10.0;
  std::optional<double> rob_truth;
  add_estimation_flags(rob, rob_flags);
  rob->add_option("--param", rob_param, "Estimated parameter")->capture_default_str();
  rob->add_option("--perturb", rob_perturb, "alpha | omega0")->capture_default_str();
  rob->add_option("--range", rob_range, "Relative errors lo:hi:n")->required();
  rob->add_option("--grid", rob_grid, "Initial grid lo:hi:n")->required();
  rob->add_option("--refine", rob_refine, "Refinement rounds")->capture_default_str();
  rob->add_option("--shrink", rob_shrink, "Bracket shrink per round")
      ->capture_default_str();
  rob->add_option("--truth", rob_truth, "True value (default: from the record)");
  rob->add_option("--out", outputs.out, "Output CSV")->required();

  // spectrum
  auto* spec = app.add_subcommand("spectrum", "PSD of the estimator residual");
  EstimationFlags spec_flags;
  spec_flags.loss = "residual";
  std::vector<std::string> spec_point;
  int spec_segments = 16;
  std::string spec_window = "hann";
  add_estimation_flags(spec, spec_flags);
  spec->add_option("--at", spec_point,
                   "Parameter point key=value (default: the record's values)");
  spec->add_option("--segments", spec_segments, "Welch segments")->capture_default_str();
  spec->add_option("--window", spec_window, "hann | rect")->capture_default_str();
  spec->add_option("--out", outputs.out, "Output CSV")->required();

  // qcrb
  auto* qc = app.add_subcommand("qcrb", "Spectral bounds for force estimation");
  double qc_omega0 = 2.0 * 3.14159265358979323846, qc_gamma = 0.1, qc_sfba = 1.0,
         qc_sth = 0.0, qc_tau = 20.0;
  std::string qc_sf = "inf", qc_omega = "0:20:2001", qc_band;
  qc->add_option("--omega0", qc_omega0, "Oscillator frequency")->capture_default_str();
  qc->add_option("--gamma", qc_gamma, "Oscillator damping")->capture_default_str();
  qc->add_option("--s-fba", qc_sfba, "Backaction force PSD (flat)")->capture_default_str();
  qc->add_option("--s-f", qc_sf, "Prior force PSD (flat) or inf")->capture_default_str();
  qc->add_option("--s-th", qc_sth, "Extra thermal force PSD (flat)")->capture_default_str();
  qc->add_option("--omega", qc_omega, "Frequency grid lo:hi:n")->capture_default_str();
  qc->add_option("--band", qc_band, "Integration band lo:hi (default: symmetric full grid)");
  qc->add_option("--tau", qc_tau, "Integration time for the bandwidth variance")
      ->capture_default_str();
  qc->add_option("--out", outputs.out, "Output CSV")->required();

  // replay
  auto* rep = app.add_subcommand("replay", "Regenerate an output from its header");
  std::string rep_input;
  rep->add_option("input", rep_input, "Output file to regenerate")->required();
  rep->add_option("--out", outputs.out, "Destination path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      json params = json::object();
      for (const auto& [k, v] : parse_assignments(sim_params)) params[k] = v;
      if (sim_dim > 0) params["dim"] = sim_dim;
      config = {{"command", "simulate"}, {"model", sim_model}, {"params", params},
                {"dt", sim_dt},          {"tau", sim_tau},     {"seed", sim_seed},
                {"emit_truth", sim_truth}};
    } else if (est->parsed()) {
      config = estimation_config("estimate", est_flags, est_flags.burn_in);
      config["param"] = est_param;
      config["grid"] = grid_json(parse_grid(est_grid, "--grid"));
      if (est_refine < 0) throw InvalidParam("--refine must be >= 0");
      config["refine"] = est_refine;
      config["shrink"] = est_shrink;
    } else if (s2->parsed()) {
      config = estimation_config("sweep2d", s2_flags, s2_flags.burn_in);
      config["params"] = {s2_x, s2_y};
      config["grid_x"] = grid_json(parse_grid(s2_gx, "--grid-x"));
      config["grid_y"] = grid_json(parse_grid(s2_gy, "--grid-y"));
    } else if (rob->parsed()) {
      // With a frequency error the initial state is still exact.
      std::string burn = rob_flags.burn_in;
      if (burn == "auto" && rob_perturb == "omega0") burn = "0";
      config = estimation_config("robustness", rob_flags, burn);
      config["param"] = rob_param;
      config["perturb"] = rob_perturb;
      config["range"] = grid_json(parse_grid(rob_range, "--range"));
      config["grid"] = grid_json(parse_grid(rob_grid, "--grid"));
      config["refine"] = rob_refine;
      config["shrink"] = rob_shrink;
      if (!rob_truth) {
        const RecordMeta meta = read_record(rob_flags.traj).meta;
        auto it = meta.params.find(rob_param);
        if (it == meta.params.end()) {
          throw InvalidParam("record has no true value for '" + rob_param +
                             "'; pass --truth");
        }
        rob_truth = it->second;
      }
      config["truth"] = *rob_truth;
    } else if (spec->parsed()) {
      config = estimation_config("spectrum", spec_flags, spec_flags.burn_in);
      ParamMap point = parse_assignments(spec_point);
      if (point.empty()) point = read_record(spec_flags.traj).meta.params;
      json p = json::object();
      for (const auto& [k, v] : point) p[k] = v;
      config["point"] = p;
      config["segments"] = spec_segments;
      config["window"] = spec_window;
    } else if (qc->parsed()) {
      const GridSpec grid = parse_grid(qc_omega, "--omega");
      json sf = "inf";
      if (qc_sf != "inf") sf = parse_number(qc_sf, "--s-f");
      std::vector<double> band;
      if (qc_band.empty()) {
        const double w = std::max(std::abs(grid.lo), std::abs(grid.hi));
        band = grid.lo >= 0.0 ? std::vector<double>{-w, w}
                              : std::vector<double>{grid.lo, grid.hi};
      } else {
        const auto colon = qc_band.find(':');
        if (colon == std::string::npos) throw InvalidParam("--band must be lo:hi");
        band = {parse_number(qc_band.substr(0, colon), "--band"),
                parse_number(qc_band.substr(colon + 1), "--band")};
      }
      config = {{"command", "qcrb"}, {"omega0", qc_omega0}, {"gamma", qc_gamma},
                {"s_fba", qc_sfba},  {"s_f", sf},           {"s_th", qc_sth},
                {"omega", grid_json(grid)}, {"band", band}, {"tau", qc_tau}};
    } else if (rep->parsed()) {
      std::ifstream in(rep_input, std::ios::binary);
      if (!in) throw IoError("cannot open " + rep_input);
      std::string line;
      std::getline(in, line);
      json header;
      try {
        header = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError(std::string("line 1: ") + e.what());
      }
      OutputPaths redirected;
      if (!header.contains("config")) {
        config = simulate_config_from_record(rep_input);
        redirected.out = outputs.out;
      } else {
        config = header.at("config");
        const std::string kind = header.at("output").get<std::string>();
        if (kind == "summary") {
          redirected.summary = outputs.out;
        } else if (kind == "sensitivity") {
          redirected.sensitivity = outputs.out;
        } else {
          redirected.out = outputs.out;
        }
      }
      std::ostringstream sink;
      execute_config(config, redirected, threads, sink);
      out << "regenerated " << outputs.out << "\n";
      return kExitOk;
    }
    execute_config(config, outputs, threads, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (dynamic_cast<const BracketCollapse*>(&e)) {
      err << "hint: the minimum is outside the grid; widen --grid\n";
    }
    return exit_code_for(e);
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(argc, argv, std::cout, std::cerr);
}

}  // namespace qpe
