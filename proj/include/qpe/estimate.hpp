#pragma once

// Single-trajectory parameter estimation: drive the filter with a record at
// trial parameters, score the result against the record, and search the
// parameter grid for the minimum.
//
// Two losses are provided. Driving the filter with the record and then
// reconstructing the current from the innovation reproduces the record for
// every trial value, so the estimator's own conditional mean stands in for
// the simulated current:
//
//   kRecordResidual   sum_j |I_j - m_c(t_j)|^2      (works on any record)
//   kOracleMean       sum_j |truth_j - m_c(t_j)|^2  (synthetic records only)
//
// Both sum over t_j > burn_in (all samples when burn_in is 0).

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qpe/models.hpp"
#include "qpe/record.hpp"
#include "qpe/sme.hpp"

namespace qpe {

enum class LossVariant { kRecordResidual, kOracleMean };

struct LossKind {
  LossVariant variant = LossVariant::kOracleMean;
  // Divide by the number of included samples.
  bool normalize = false;
};

// Throws MissingTruth (kOracleMean without a truth channel), AlignmentError
// (run not aligned to record) or InvalidParam (burn_in >= tau).
double loss_eval(const LossKind& kind, const TrajectoryRecord& record,
                 const EstimatorRun& run, double burn_in);

struct EstimatorSettings {
  // stepper.dt <= 0 means "use the record's dt".
  StepperConfig stepper{.dt = 0.0};
  LossKind kind;
  // 0 = all hardware threads. Results never depend on this.
  int threads = 0;
};

struct EstimationProblem {
  ModelSpec model;
  TrajectoryRecord record;
  EstimatorSettings settings;
  // Filter initial state; defaults to the model's coherent state.
  std::optional<QuantumState> initial_state;

  QuantumState filter_initial_state() const;
  StepperConfig stepper_config() const;
};

struct GridSpec {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;

  // lo + (hi - lo) * i / (n - 1); throws InvalidGrid unless n >= 2 and
  // lo < hi are finite.
  std::vector<double> points() const;
};

struct RefinementRound {
  std::vector<std::pair<double, double>> bounds;  // per parameter
  ParamPoint argmin;
  double best_loss = 0.0;
};

struct LossSurface {
  std::vector<std::string> param_names;
  // Axis values per parameter; the grid is their Cartesian product in
  // row-major order (last parameter fastest).
  std::vector<std::vector<double>> axes;
  std::vector<ParamPoint> grid;
  // NaN where the point failed.
  std::vector<double> losses;
  // Empty string for successful points, else the error message.
  std::vector<std::string> failures;
  std::size_t argmin_index = 0;
  ParamPoint argmin_point;
  double best_loss = 0.0;
  std::vector<RefinementRound> refinement_trace;

  bool failed(std::size_t i) const { return !failures[i].empty(); }
};

// Filter run and loss at one parameter point of `problem.model`.
EstimatorRun run_at(const EstimationProblem& problem, const ParamPoint& point);
double evaluate_loss(const EstimationProblem& problem, const ParamPoint& point);

// Evaluates the Cartesian product of `axes` for the named parameters.
// Numerical failures are recorded per point; ties go to the
// lexicographically smallest point. Throws MissingTruth, InvalidGrid,
// AllPointsFailed.
LossSurface sweep_axes(const EstimationProblem& problem,
                       const std::vector<std::string>& params,
                       const std::vector<std::vector<double>>& axes);

// Throws InvalidGrid for fewer than 3 points.
LossSurface sweep_1d(const EstimationProblem& problem,
                     const std::string& free_param, const GridSpec& grid);

// Throws InvalidGrid for fewer than 2 points on either axis.
LossSurface sweep_2d(const EstimationProblem& problem,
                     const std::pair<std::string, std::string>& params,
                     const GridSpec& first, const GridSpec& second);

// Re-grids a bracket shrunk by `shrink` per round around the current
// argmin (same point count, forced odd so the previous argmin is
// re-evaluated) and re-sweeps. The final bracket width is
// initial / shrink^rounds. Throws InvalidParam for rounds < 1 or
// shrink <= 1, BracketCollapse when the argmin sits on a bracket edge in
// two consecutive rounds. `history`, if given, receives every round's
// surface starting with `surface` itself.
LossSurface refine_min(const EstimationProblem& problem,
                       const LossSurface& surface, int rounds, double shrink,
                       std::vector<LossSurface>* history = nullptr);

struct SensitivityCurve {
  std::vector<double> lambdas;
  std::vector<double> dloss;     // dLoss/dlambda, central differences
  std::vector<double> inverse;   // dlambda/dLoss, 0 where flagged
  std::vector<bool> flagged;     // |dLoss/dlambda| too small to invert
  std::size_t peak_index = 0;    // argmax |inverse| over unflagged entries
};

// Relative slope threshold below which an entry is flagged.
inline constexpr double kSensitivityFlagRatio = 1e-9;

// Throws InvalidGrid for non-1D surfaces or fewer than 3 points.
SensitivityCurve sensitivity(const LossSurface& surface);

enum class Perturbation { kAlpha, kOmega0 };

struct RefineSettings {
  GridSpec initial;
  int rounds = 3;
  double shrink = 10.0;
};

struct RobustnessRow {
  double epsilon = 0.0;
  double estimate = 0.0;
  double percent_error = 0.0;
};

// For each relative error eps, perturbs the filter's initial amplitude
// (alpha0 -> alpha0 (1 + eps)) or its model frequency
// (omega0 -> omega0 (1 + eps)), re-estimates `target` with refine_min and
// reports 100 |estimate - truth| / |truth|.
std::vector<RobustnessRow> robustness_scan(const EstimationProblem& problem,
                                           const std::string& target,
                                           double truth,
                                           Perturbation perturbation,
                                           std::span<const double> epsilons,
                                           const RefineSettings& refine);

}  // namespace qpe
