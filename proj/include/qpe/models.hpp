#pragma once

// Parametrized open-system models. A model owns a full parameter map
// (every named quantity it understands, with defaults) and a pure builder
// from that map to SmeTerms. Estimation sweeps override a subset of the
// names ("free" parameters) and leave the rest fixed.
//
// Registered models:
//
//   levitated   H = (omega0/4)(p^2 + x^2) + omega0 f x  (wide quadratures)
//               dissipators gamma1 D[x], gamma2 D[x^2], kappa D[a]
//               keys: f omega0 gamma1 gamma2 kappa eta dim alpha0_re alpha0_im
//   oscillator  H = omega a^dagger a
//               dissipators gamma D[a], kappa D[a]
//               keys: omega gamma kappa eta dim alpha0_re alpha0_im
//
// Both measure a by homodyne with observable (a + a^dagger)/sqrt(2).

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qpe/hilbert.hpp"
#include "qpe/record.hpp"
#include "qpe/sme.hpp"

namespace qpe {

struct ParamPoint {
  std::vector<double> values;
  bool operator==(const ParamPoint&) const = default;
};

using ModelBuilder = std::function<SmeTerms(const ParamMap&)>;

struct ModelSpec {
  std::string name;
  // Ordered free parameters; ParamPoint values map onto these names.
  std::vector<std::string> param_names;
  // Every parameter the builder reads, including defaults for the free ones.
  ParamMap fixed;
  ModelBuilder builder;

  // `fixed` with the free parameters replaced by `point`. Throws
  // InvalidParam on arity mismatch or non-finite values.
  ParamMap resolve(const ParamPoint& point) const;
  SmeTerms build(const ParamPoint& point) const;
  SmeTerms build(const ParamMap& params) const { return builder(params); }

  // Current values of the free parameters.
  ParamPoint default_point() const;

  int dim() const;
  Complex initial_alpha() const;
  QuantumState initial_state(std::vector<std::string>* warnings = nullptr) const;
};

std::vector<std::string> registered_models();

// Throws InvalidParam for an unknown model name (message lists the
// registered ones) or unknown parameter names. Empty `free_params` selects
// the model's default free parameters (levitated: f; oscillator: omega,
// gamma).
ModelSpec make_model(const std::string& name, const ParamMap& overrides = {},
                     const std::vector<std::string>& free_params = {});

ParamMap levitated_defaults();
ParamMap oscillator_defaults();

// Throws InvalidParam for non-finite f or invalid fixed values.
SmeTerms build_levitated(double f, const ParamMap& fixed);
// `p` = (omega, gamma). Throws InvalidParam for wrong arity or gamma < 0.
SmeTerms build_oscillator(const ParamPoint& p, const ParamMap& fixed);

// H = base.hamiltonian + sum_i lambda_i generator_i, everything else taken
// from `base`. Free parameters are the generator names.
ModelSpec make_linear_model(
    std::string name, SmeTerms base,
    std::vector<std::pair<std::string, Operator>> generators,
    ParamMap fixed = {});

// Synthesizes a record from `model` at parameters `truth`, starting in the
// model's coherent initial state, and fills the model-level metadata.
TrajectoryRecord simulate_experiment(const ModelSpec& model,
                                     const ParamMap& truth,
                                     const StepperConfig& config, double tau,
                                     std::uint64_t seed, bool emit_truth,
                                     std::vector<std::string>* warnings = nullptr);

struct PhysicalUnits {
  static constexpr double kHbar = 1.054571817e-34;  // J s
  double mass = 0.0;       // kg
  double omega0_si = 0.0;  // rad/s
};

// x0 = sqrt(hbar / (2 m omega0)).
double zero_point_length(const PhysicalUnits& units);
// F = hbar omega0 f / x0 in newtons. Throws InvalidParam.
double to_physical_force(double f, const PhysicalUnits& units);

}  // namespace qpe
