#include "qpe/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qpe/errors.hpp"
#include "qpe/parallel.hpp"

namespace qpe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_problem(const EstimationProblem& problem) {
  if (problem.record.size() == 0) throw EmptyRecord("record has no samples");
  if (problem.settings.kind.variant == LossVariant::kOracleMean &&
      !problem.record.has_truth()) {
    throw MissingTruth(
        "oracle-mean loss needs a record with a truth channel; use the "
        "record-residual loss for measured data");
  }
  const double burn_in = problem.settings.stepper.burn_in_time;
  if (!(burn_in >= 0.0)) throw InvalidParam("burn-in must be >= 0");
  if (burn_in >= problem.record.times.back() && burn_in > 0.0) {
    throw InvalidParam("burn-in exceeds the record duration");
  }
}

// Lexicographic comparison used to break loss ties.
bool point_less(const ParamPoint& a, const ParamPoint& b) {
  return std::lexicographical_compare(a.values.begin(), a.values.end(),
                                      b.values.begin(), b.values.end());
}

std::vector<ParamPoint> cartesian(const std::vector<std::vector<double>>& axes) {
  std::vector<ParamPoint> grid;
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  grid.reserve(total);
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    ParamPoint p;
    for (std::size_t d = 0; d < axes.size(); ++d) p.values.push_back(axes[d][idx[d]]);
    grid.push_back(std::move(p));
    for (std::size_t d = axes.size(); d-- > 0;) {
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
    }
  }
  return grid;
}

// Index of the argmin along each axis for a row-major grid.
std::vector<std::size_t> axis_indices(const LossSurface& s, std::size_t flat) {
  std::vector<std::size_t> out(s.axes.size());
  for (std::size_t d = s.axes.size(); d-- > 0;) {
    out[d] = flat % s.axes[d].size();
    flat /= s.axes[d].size();
  }
  return out;
}

bool on_edge(const LossSurface& s) {
  const auto idx = axis_indices(s, s.argmin_index);
  for (std::size_t d = 0; d < idx.size(); ++d) {
    if (idx[d] == 0 || idx[d] + 1 == s.axes[d].size()) return true;
  }
  return false;
}

RefinementRound round_of(const LossSurface& s) {
  RefinementRound r;
  for (const auto& a : s.axes) r.bounds.emplace_back(a.front(), a.back());
  r.argmin = s.argmin_point;
  r.best_loss = s.best_loss;
  return r;
}

}  // namespace

double loss_eval(const LossKind& kind, const TrajectoryRecord& record,
                 const EstimatorRun& run, double burn_in) {
  if (kind.variant == LossVariant::kOracleMean && !record.has_truth()) {
    throw MissingTruth("oracle-mean loss needs a record with a truth channel");
  }
  if (run.cond_means.size() != record.size() ||
      run.times.size() != record.size()) {
    std::ostringstream msg;
    msg << "estimator run has " << run.cond_means.size()
        << " samples, record has " << record.size();
    throw AlignmentError(msg.str());
  }
  for (std::size_t j = 0; j < record.size(); ++j) {
    if (run.times[j] != record.times[j]) {
      std::ostringstream msg;
      msg << "sample " << j << ": run time " << run.times[j]
          << " != record time " << record.times[j];
      throw AlignmentError(msg.str());
    }
  }
  const std::vector<double>& target =
      kind.variant == LossVariant::kOracleMean ? *record.truth : record.currents;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < record.size(); ++j) {
    if (!(record.times[j] > burn_in) && burn_in > 0.0) continue;
    const double r = target[j] - run.cond_means[j];
    sum += r * r;
    ++count;
  }
  if (count == 0) throw InvalidParam("burn-in leaves no samples");
  return kind.normalize ? sum / static_cast<double>(count) : sum;
}

QuantumState EstimationProblem::filter_initial_state() const {
  if (initial_state) return *initial_state;
  return model.initial_state();
}

StepperConfig EstimationProblem::stepper_config() const {
  StepperConfig c = settings.stepper;
  if (!(c.dt > 0.0)) c.dt = record.meta.dt;
  return c;
}

std::vector<double> GridSpec::points() const {
  if (n < 2 || !std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    std::ostringstream msg;
    msg << "grid [" << lo << ", " << hi << "] with " << n
        << " points: need n >= 2 and finite lo < hi";
    throw InvalidGrid(msg.str());
  }
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    pts[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  }
  pts.back() = hi;
  return pts;
}

EstimatorRun run_at(const EstimationProblem& problem, const ParamPoint& point) {
  const SmeTerms terms = problem.model.build(point);
  return run_estimator(terms, problem.filter_initial_state(),
                       problem.stepper_config(), problem.record);
}

double evaluate_loss(const EstimationProblem& problem, const ParamPoint& point) {
  const EstimatorRun run = run_at(problem, point);
  if (run.min_eigen_seen < QuantumState::kEigenFloor) {
    std::ostringstream msg;
    msg << "filter state left the physical set (min eigenvalue "
        << run.min_eigen_seen << ")";
    throw NonPhysicalState(msg.str());
  }
  return loss_eval(problem.settings.kind, problem.record, run,
                   problem.settings.stepper.burn_in_time);
}

LossSurface sweep_axes(const EstimationProblem& problem,
                       const std::vector<std::string>& params,
                       const std::vector<std::vector<double>>& axes) {
  if (params.empty() || params.size() != axes.size()) {
    throw InvalidGrid("need one axis per swept parameter");
  }
  for (std::size_t d = 0; d < axes.size(); ++d) {
    if (axes[d].empty()) throw InvalidGrid("axis '" + params[d] + "' is empty");
    for (double v : axes[d]) {
      if (!std::isfinite(v)) {
        throw InvalidGrid("axis '" + params[d] + "' has a non-finite point");
      }
    }
  }
  check_problem(problem);

  EstimationProblem local = problem;
  local.model.param_names = params;
  for (const auto& p : params) {
    if (!local.model.fixed.contains(p)) {
      throw InvalidParam("model '" + local.model.name + "' has no parameter '" +
                         p + "'");
    }
  }
  // Pin the filter's initial state before the sweep so it cannot depend on
  // swept parameters.
  if (!local.initial_state) local.initial_state = local.model.initial_state();
  // Configuration errors should surface once, not as per-point failures.
  local.stepper_config().validate();

  LossSurface s;
  s.param_names = params;
  s.axes = axes;
  s.grid = cartesian(axes);
  s.losses.assign(s.grid.size(), kNaN);
  s.failures.assign(s.grid.size(), std::string());

  parallel_for(s.grid.size(), problem.settings.threads, [&](std::size_t i) {
    try {
      s.losses[i] = evaluate_loss(local, s.grid[i]);
    } catch (const NumericalBlowup& e) {
      s.failures[i] = e.what();
    } catch (const NonPhysicalState& e) {
      s.failures[i] = e.what();
    } catch (const InvalidParam& e) {
      // e.g. a grid point with a negative rate
      s.failures[i] = e.what();
    }
  });

  bool found = false;
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (s.failed(i)) continue;
    if (!found || s.losses[i] < s.best_loss ||
        (s.losses[i] == s.best_loss && point_less(s.grid[i], s.argmin_point))) {
      found = true;
      s.argmin_index = i;
      s.argmin_point = s.grid[i];
      s.best_loss = s.losses[i];
    }
  }
  if (!found) {
    throw AllPointsFailed("all " + std::to_string(s.grid.size()) +
                          " grid points failed; first: " + s.failures.front());
  }
  s.refinement_trace.push_back(round_of(s));
  return s;
}

LossSurface sweep_1d(const EstimationProblem& problem,
                     const std::string& free_param, const GridSpec& grid) {
  const auto pts = grid.points();
  if (pts.size() < 3) throw InvalidGrid("1-D sweeps need at least 3 points");
  return sweep_axes(problem, {free_param}, {pts});
}

LossSurface sweep_2d(const EstimationProblem& problem,
                     const std::pair<std::string, std::string>& params,
                     const GridSpec& first, const GridSpec& second) {
  if (params.first == params.second) {
    throw InvalidGrid("2-D sweep needs two distinct parameters");
  }
  return sweep_axes(problem, {params.first, params.second},
                    {first.points(), second.points()});
}

LossSurface refine_min(const EstimationProblem& problem,
                       const LossSurface& surface, int rounds, double shrink,
                       std::vector<LossSurface>* history) {
  if (rounds < 1) throw InvalidParam("refinement needs rounds >= 1");
  if (!(shrink > 1.0) || !std::isfinite(shrink)) {
    throw InvalidParam("refinement shrink factor must be > 1");
  }
  if (surface.grid.empty() || surface.axes.empty()) {
    throw InvalidGrid("cannot refine an empty surface");
  }
  std::vector<double> widths;
  std::vector<std::size_t> counts;
  for (const auto& a : surface.axes) {
    if (a.size() < 2) throw InvalidGrid("cannot refine an axis with one point");
    widths.push_back(a.back() - a.front());
    counts.push_back(a.size() | 1u);
  }
  if (history) {
    history->clear();
    history->push_back(surface);
  }

  LossSurface current = surface;
  std::vector<RefinementRound> trace = surface.refinement_trace;
  if (trace.empty()) trace.push_back(round_of(surface));
  bool prev_edge = on_edge(surface);
  for (int r = 1; r <= rounds; ++r) {
    std::vector<std::vector<double>> axes;
    for (std::size_t d = 0; d < widths.size(); ++d) {
      const double width = widths[d] / std::pow(shrink, r);
      const double center = current.argmin_point.values[d];
      const std::size_t n = counts[d];
      const double step = width / static_cast<double>(n - 1);
      const double mid = static_cast<double>(n / 2);
      std::vector<double> axis(n);
      for (std::size_t i = 0; i < n; ++i) {
        axis[i] = center + (static_cast<double>(i) - mid) * step;
      }
      axis[n / 2] = center;
      axes.push_back(std::move(axis));
    }
    LossSurface next = sweep_axes(problem, current.param_names, axes);
    // The previous argmin is on the new grid, so the best loss cannot rise.
    trace.push_back(round_of(next));
    const bool edge = on_edge(next);
    if (history) history->push_back(next);
    if (edge && prev_edge) {
      std::ostringstream msg;
      msg << "argmin pinned to the bracket edge in rounds " << r - 1 << " and "
          << r << " (at";
      for (double v : next.argmin_point.values) msg << ' ' << v;
      msg << "); widen the initial grid";
      throw BracketCollapse(msg.str());
    }
    prev_edge = edge;
    current = std::move(next);
  }
  current.refinement_trace = std::move(trace);
  return current;
}

SensitivityCurve sensitivity(const LossSurface& surface) {
  if (surface.axes.size() != 1) {
    throw InvalidGrid("sensitivity needs a 1-D loss surface");
  }
  const std::size_t n = surface.grid.size();
  if (n < 3) throw InvalidGrid("sensitivity needs at least 3 points");
  SensitivityCurve c;
  c.lambdas = surface.axes[0];
  c.dloss.resize(n);
  const auto& L = surface.losses;
  const auto& x = c.lambdas;
  c.dloss[0] = (L[1] - L[0]) / (x[1] - x[0]);
  c.dloss[n - 1] = (L[n - 1] - L[n - 2]) / (x[n - 1] - x[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    c.dloss[i] = (L[i + 1] - L[i - 1]) / (x[i + 1] - x[i - 1]);
  }
  double max_slope = 0.0;
  for (double d : c.dloss) {
    if (std::isfinite(d)) max_slope = std::max(max_slope, std::abs(d));
  }
  c.inverse.assign(n, 0.0);
  c.flagged.assign(n, true);
  double peak = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = c.dloss[i];
    if (!std::isfinite(d) || std::abs(d) <= kSensitivityFlagRatio * max_slope ||
        d == 0.0) {
      continue;
    }
    c.flagged[i] = false;
    c.inverse[i] = 1.0 / d;
    if (std::abs(c.inverse[i]) > peak) {
      peak = std::abs(c.inverse[i]);
      c.peak_index = i;
    }
  }
  return c;
}

std::vector<RobustnessRow> robustness_scan(const EstimationProblem& problem,
                                           const std::string& target,
                                           double truth,
                                           Perturbation perturbation,
                                           std::span<const double> epsilons,
                                           const RefineSettings& refine) {
  if (!std::isfinite(truth) || truth == 0.0) {
    throw InvalidParam("robustness truth value must be finite and non-zero");
  }
  std::vector<RobustnessRow> rows;
  for (double eps : epsilons) {
    if (!std::isfinite(eps) || eps <= -1.0) {
      throw InvalidParam("relative error must be finite and > -1");
    }
    EstimationProblem p = problem;
    auto scale = [&](const char* key) {
      auto it = p.model.fixed.find(key);
      if (it == p.model.fixed.end()) {
        throw InvalidParam("model '" + p.model.name + "' has no parameter '" +
                           key + "'");
      }
      it->second *= 1.0 + eps;
    };
    if (perturbation == Perturbation::kAlpha) {
      scale("alpha0_re");
      scale("alpha0_im");
      p.initial_state.reset();
    } else {
      scale("omega0");
    }
    const LossSurface coarse = sweep_1d(p, target, refine.initial);
    const LossSurface fine =
        refine_min(p, coarse, refine.rounds, refine.shrink);
    const double est = fine.argmin_point.values[0];
    rows.push_back({eps, est, 100.0 * std::abs(est - truth) / std::abs(truth)});
  }
  return rows;
}

}  // namespace qpe
