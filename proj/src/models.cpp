#include "qpe/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "qpe/errors.hpp"

namespace qpe {

namespace {

double get(const ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) throw InvalidParam("missing parameter '" + key + "'");
  return it->second;
}

int get_dim(const ParamMap& params) {
  const double d = get(params, "dim");
  if (!(d >= 2.0) || d != std::floor(d) || d > 4096.0) {
    throw InvalidParam("dim must be an integer >= 2");
  }
  return static_cast<int>(d);
}

void require_finite(double v, const std::string& name) {
  if (!std::isfinite(v)) throw InvalidParam(name + " must be finite");
}

void require_rates(const ParamMap& params,
                   std::initializer_list<const char*> names) {
  for (const char* n : names) {
    const double v = get(params, n);
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidParam(std::string(n) + " must be finite and >= 0");
    }
  }
}

void require_eta(const ParamMap& params) {
  const double eta = get(params, "eta");
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidParam("eta must be in [0, 1]");
}

Operator homodyne_observable(const HilbertSpace& space) {
  return build_quadratures(space, QuadratureConvention::kStandard).x;
}

SmeTerms build_levitated_map(const ParamMap& params) {
  const double f = get(params, "f");
  require_finite(f, "f");
  const double omega0 = get(params, "omega0");
  require_finite(omega0, "omega0");
  require_rates(params, {"gamma1", "gamma2", "kappa"});
  require_eta(params);
  const HilbertSpace space(get_dim(params));

  const auto [x, p] = build_quadratures(space, QuadratureConvention::kWide);
  const Operator a = build_ladder(space).a;
  const Operator x2 = x * x;
  Operator h = (omega0 / 4.0) * (p * p + x2) + (omega0 * f) * x;
  const double kappa = get(params, "kappa");
  return SmeTerms{
      .hamiltonian = std::move(h),
      .dissipators = {{x, get(params, "gamma1")},
                      {x2, get(params, "gamma2")},
                      {a, kappa}},
      .measurement_op = a,
      .measured_observable = homodyne_observable(space),
      .kappa = kappa,
      .eta = get(params, "eta"),
  };
}

SmeTerms build_oscillator_map(const ParamMap& params) {
  const double omega = get(params, "omega");
  require_finite(omega, "omega");
  require_rates(params, {"gamma", "kappa"});
  require_eta(params);
  const HilbertSpace space(get_dim(params));
  const Operator a = build_ladder(space).a;
  const double kappa = get(params, "kappa");
  return SmeTerms{
      .hamiltonian = omega * number_operator(space),
      .dissipators = {{a, get(params, "gamma")}, {a, kappa}},
      .measurement_op = a,
      .measured_observable = homodyne_observable(space),
      .kappa = kappa,
      .eta = get(params, "eta"),
  };
}

struct Registration {
  const char* name;
  ParamMap (*defaults)();
  std::vector<std::string> free;
  SmeTerms (*builder)(const ParamMap&);
};

const std::vector<Registration>& registry() {
  static const std::vector<Registration> r = {
      {"levitated", &levitated_defaults, {"f"}, &build_levitated_map},
      {"oscillator", &oscillator_defaults, {"omega", "gamma"},
       &build_oscillator_map},
  };
  return r;
}

}  // namespace

ParamMap levitated_defaults() {
  return {{"f", 1.0},      {"omega0", 2.0 * std::numbers::pi},
          {"gamma1", 0.01}, {"gamma2", 0.01},
          {"kappa", 1.0},  {"eta", 1.0},
          {"dim", 16.0},   {"alpha0_re", 0.0},
          {"alpha0_im", 0.0}};
}

ParamMap oscillator_defaults() {
  return {{"omega", 1.0},     {"gamma", 1.0},    {"kappa", 1.0},
          {"eta", 1.0},       {"dim", 16.0},     {"alpha0_re", 1.5},
          {"alpha0_im", 0.0}};
}

ParamMap ModelSpec::resolve(const ParamPoint& point) const {
  if (point.values.size() != param_names.size()) {
    std::ostringstream msg;
    msg << "model '" << name << "' expects " << param_names.size()
        << " parameters, got " << point.values.size();
    throw InvalidParam(msg.str());
  }
  ParamMap params = fixed;
  for (std::size_t k = 0; k < param_names.size(); ++k) {
    require_finite(point.values[k], param_names[k]);
    params[param_names[k]] = point.values[k];
  }
  return params;
}

SmeTerms ModelSpec::build(const ParamPoint& point) const {
  return builder(resolve(point));
}

ParamPoint ModelSpec::default_point() const {
  ParamPoint p;
  for (const auto& n : param_names) p.values.push_back(get(fixed, n));
  return p;
}

int ModelSpec::dim() const { return get_dim(fixed); }

Complex ModelSpec::initial_alpha() const {
  auto value = [&](const char* key) {
    auto it = fixed.find(key);
    return it == fixed.end() ? 0.0 : it->second;
  };
  return {value("alpha0_re"), value("alpha0_im")};
}

QuantumState ModelSpec::initial_state(
    std::vector<std::string>* warnings) const {
  return coherent_density(HilbertSpace(dim()), initial_alpha(), warnings);
}

std::vector<std::string> registered_models() {
  std::vector<std::string> names;
  for (const auto& r : registry()) names.emplace_back(r.name);
  return names;
}

ModelSpec make_model(const std::string& name, const ParamMap& overrides,
                     const std::vector<std::string>& free_params) {
  for (const auto& r : registry()) {
    if (name != r.name) continue;
    ModelSpec spec{name, free_params.empty() ? r.free : free_params,
                   r.defaults(), r.builder};
    for (const auto& [k, v] : overrides) {
      if (!spec.fixed.contains(k)) {
        throw InvalidParam("model '" + name + "' has no parameter '" + k + "'");
      }
      spec.fixed[k] = v;
    }
    for (const auto& p : spec.param_names) {
      if (!spec.fixed.contains(p)) {
        throw InvalidParam("model '" + name + "' has no parameter '" + p + "'");
      }
    }
    // Surface invalid fixed values now rather than inside a sweep.
    spec.builder(spec.fixed);
    return spec;
  }
  std::string known;
  for (const auto& n : registered_models()) known += (known.empty() ? "" : ", ") + n;
  throw InvalidParam("unknown model '" + name + "'; registered models: " + known);
}

SmeTerms build_levitated(double f, const ParamMap& fixed) {
  ParamMap params = levitated_defaults();
  for (const auto& [k, v] : fixed) params[k] = v;
  params["f"] = f;
  return build_levitated_map(params);
}

SmeTerms build_oscillator(const ParamPoint& p, const ParamMap& fixed) {
  if (p.values.size() != 2) {
    throw InvalidParam("oscillator expects (omega, gamma), got " +
                       std::to_string(p.values.size()) + " values");
  }
  ParamMap params = oscillator_defaults();
  for (const auto& [k, v] : fixed) params[k] = v;
  params["omega"] = p.values[0];
  params["gamma"] = p.values[1];
  return build_oscillator_map(params);
}

ModelSpec make_linear_model(
    std::string name, SmeTerms base,
    std::vector<std::pair<std::string, Operator>> generators, ParamMap fixed) {
  base.validate();
  ModelSpec spec;
  spec.name = std::move(name);
  for (const auto& [gname, op] : generators) {
    if (!(op.space() == base.space())) {
      throw DimensionMismatch("generator '" + gname + "' lives in another space");
    }
    if (!op.is_hermitian(1e-12)) {
      throw InvalidParam("generator '" + gname + "' is not Hermitian");
    }
    spec.param_names.push_back(gname);
    if (!fixed.contains(gname)) fixed[gname] = 0.0;
  }
  fixed["dim"] = base.space().dim();
  spec.fixed = std::move(fixed);
  spec.builder = [base = std::move(base),
                  generators = std::move(generators)](const ParamMap& params) {
    SmeTerms terms = base;
    for (const auto& [gname, op] : generators) {
      const double lambda = get(params, gname);
      require_finite(lambda, gname);
      terms.hamiltonian = terms.hamiltonian + lambda * op;
    }
    return terms;
  };
  return spec;
}

TrajectoryRecord simulate_experiment(const ModelSpec& model,
                                     const ParamMap& truth,
                                     const StepperConfig& config, double tau,
                                     std::uint64_t seed, bool emit_truth,
                                     std::vector<std::string>* warnings) {
  ParamMap params = model.fixed;
  for (const auto& [k, v] : truth) {
    if (!params.contains(k)) {
      throw InvalidParam("model '" + model.name + "' has no parameter '" + k + "'");
    }
    params[k] = v;
  }
  const SmeTerms terms = model.build(params);
  ModelSpec at_truth = model;
  at_truth.fixed = params;
  TrajectoryRecord rec =
      simulate_record(terms, at_truth.initial_state(warnings), config, tau,
                      seed, emit_truth);
  rec.meta.model = model.name;
  for (const auto& n : model.param_names) rec.meta.params[n] = params.at(n);
  for (const auto& [k, v] : params) {
    if (!rec.meta.params.contains(k)) rec.meta.fixed[k] = v;
  }
  return rec;
}

double zero_point_length(const PhysicalUnits& units) {
  if (!(units.mass > 0.0) || !(units.omega0_si > 0.0) ||
      !std::isfinite(units.mass) || !std::isfinite(units.omega0_si)) {
    throw InvalidParam("mass and omega0 must be positive and finite");
  }
  return std::sqrt(PhysicalUnits::kHbar / (2.0 * units.mass * units.omega0_si));
}

double to_physical_force(double f, const PhysicalUnits& units) {
  require_finite(f, "f");
  return PhysicalUnits::kHbar * units.omega0_si * f / zero_point_length(units);
}

}  // namespace qpe
