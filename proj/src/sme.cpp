#include "qpe/sme.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "qpe/errors.hpp"

namespace qpe {

namespace {

constexpr double kBlowupTraceDeviation = 0.5;
constexpr double kBlowupEntry = 1e6;
// Eigenvalue diagnostics are sampled, not computed every step.
constexpr std::size_t kEigenCheckInterval = 256;

void require_space(const HilbertSpace& expected, const HilbertSpace& got,
                   const char* where) {
  if (!(expected == got)) {
    std::ostringstream msg;
    msg << where << ": dim " << got.dim() << ", expected " << expected.dim();
    throw DimensionMismatch(msg.str());
  }
}

double min_eigen(const Matrix& rho) {
  Matrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(herm, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

[[noreturn]] void rethrow_at_step(const NumericalBlowup& e, std::size_t step,
                                  double t) {
  std::ostringstream msg;
  msg << e.what() << " at step " << step << " (t = " << t
      << "); try a smaller dt";
  throw NumericalBlowup(msg.str());
}

}  // namespace

void SmeTerms::validate() const {
  const HilbertSpace& s = space();
  require_space(s, measurement_op.space(), "measurement_op");
  require_space(s, measured_observable.space(), "measured_observable");
  if (!hamiltonian.is_hermitian(1e-12)) {
    throw InvalidParam("Hamiltonian is not Hermitian");
  }
  if (!measured_observable.is_hermitian(1e-12)) {
    throw InvalidParam("measured observable is not Hermitian");
  }
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw InvalidParam("kappa must be finite and >= 0");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw InvalidParam("eta must lie in [0, 1]");
  }
  int measurement_entries = 0;
  for (const auto& d : dissipators) {
    require_space(s, d.op.space(), "dissipator");
    if (!(d.rate >= 0.0) || !std::isfinite(d.rate)) {
      throw InvalidParam("dissipator rates must be finite and >= 0");
    }
    if (d.op == measurement_op && d.rate == kappa) ++measurement_entries;
  }
  if (kappa > 0.0 && measurement_entries == 0) {
    throw InvalidParam(
        "dissipators must contain the measurement channel with rate kappa");
  }
}

bool SmeTerms::operator==(const SmeTerms& o) const {
  if (!(hamiltonian == o.hamiltonian && measurement_op == o.measurement_op &&
        measured_observable == o.measured_observable && kappa == o.kappa &&
        eta == o.eta && dissipators.size() == o.dissipators.size())) {
    return false;
  }
  for (std::size_t k = 0; k < dissipators.size(); ++k) {
    if (!(dissipators[k].op == o.dissipators[k].op &&
          dissipators[k].rate == o.dissipators[k].rate)) {
      return false;
    }
  }
  return true;
}

void StepperConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw InvalidParam("dt must be finite and > 0");
  }
  if (!(burn_in_time >= 0.0)) throw InvalidParam("burn_in_time must be >= 0");
}

Matrix dissipator_apply(const Operator& op, const QuantumState& state) {
  require_space(op.space(), state.space(), "dissipator_apply");
  const Matrix& a = op.matrix();
  const Matrix& rho = state.rho();
  const Matrix ada = a.adjoint() * a;
  return a * rho * a.adjoint() - 0.5 * (ada * rho + rho * ada);
}

Matrix innovation_apply(const Operator& op, const QuantumState& state) {
  require_space(op.space(), state.space(), "innovation_apply");
  const Matrix& a = op.matrix();
  const Matrix& rho = state.rho();
  const Complex mean = rho.cwiseProduct((a + a.adjoint()).transpose()).sum();
  return a * rho + rho * a.adjoint() - mean * rho;
}

SmeStepper::OpMatrix::OpMatrix(const Matrix& m) : dense(m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return;
  const Eigen::Index nnz = (m.array() != Complex(0.0)).count();
  is_sparse = nnz * 4 <= n * n;
  if (is_sparse) {
    sparse = m.sparseView();
    sparse_adj = Matrix(m.adjoint()).sparseView();
  }
}

void SmeStepper::OpMatrix::left(Matrix& out, const Matrix& rho) const {
  if (is_sparse) {
    out.noalias() = sparse * rho;
  } else {
    out.noalias() = dense * rho;
  }
}

void SmeStepper::OpMatrix::add_right_adjoint(Matrix& out, const Matrix& m,
                                            Complex coeff) const {
  if (is_sparse) {
    out.noalias() += coeff * (m * sparse_adj);
  } else {
    out.noalias() += coeff * (m * dense.adjoint());
  }
}

SmeStepper::SmeStepper(const SmeTerms& terms, const StepperConfig& config)
    : space_(terms.space()),
      dt_(config.dt),
      config_(config),
      kappa_(terms.kappa),
      eta_(terms.eta) {
  terms.validate();
  config.validate();
  const int n = space_.dim();
  observable_t_ = terms.measured_observable.matrix().transpose();
  measurement_op_ = OpMatrix(terms.measurement_op.matrix());

  Matrix decay = Matrix::Zero(n, n);
  for (const auto& d : terms.dissipators) {
    if (d.rate == 0.0) continue;
    const Matrix& l = d.op.matrix();
    decay += d.rate * (l.adjoint() * l);
    if (measurement_jump_ < 0 && l == measurement_op_.dense &&
        d.rate == kappa_) {
      measurement_jump_ = static_cast<int>(jumps_.size());
    }
    jumps_.push_back({OpMatrix(l), d.rate});
  }
  decay_ = OpMatrix(decay);
  if (config_.scheme == StepScheme::kKraus) {
    const Matrix m0 = Matrix::Identity(n, n) - 0.5 * dt_ * decay;
    Matrix s = m0.adjoint() * m0 + dt_ * decay;
    s = 0.5 * (s + s.adjoint()).eval();
    balance_ = Eigen::SelfAdjointEigenSolver<Matrix>(s).operatorInverseSqrt();
    balanced_.resize(n, n);
  }
  if (config_.scheme != StepScheme::kEuler) {
    rotation_ = (Complex(0.0, -dt_) * terms.hamiltonian.matrix()).exp();
  } else {
    rotation_ = terms.hamiltonian.matrix();
  }
  next_.resize(n, n);
  scratch_.resize(n, n);
  meas_rho_.resize(n, n);
}

double SmeStepper::observable_mean(const Matrix& rho) const {
  return rho.cwiseProduct(observable_t_).sum().real();
}

void SmeStepper::step_sampled(Matrix& rho, double dW) {
  advance(rho, dW, true);
}

void SmeStepper::step_driven(Matrix& rho, double record_sample) {
  // 2 kappa eta (I - <X>) dt = sqrt(kappa eta) dW
  const double innovation = record_sample - observable_mean(rho);
  advance(rho, std::sqrt(4.0 * kappa_ * eta_) * dt_ * innovation, true);
}

void SmeStepper::step_unconditional(Matrix& rho) { advance(rho, 0.0, false); }

void SmeStepper::advance(Matrix& rho, double dW, bool measured) {
  if (config_.scheme == StepScheme::kKraus) {
    kraus_update(rho, dW, measured);
  } else {
    linear_update(rho, std::sqrt(kappa_ * eta_) * dW);
  }
  finish(rho);
}

void SmeStepper::kraus_update(const Matrix& rho_in, double dW, bool measured) {
  // M = 1 - dt/2 G + c A with c = sqrt(kappa eta) dy, where
  // dy = dW + sqrt(kappa eta) Tr[(A + A^dagger) rho] dt is the measured
  // increment. next = M r M^dagger + dt sum rate' L r L^dagger with
  // r = S^(-1/2) rho S^(-1/2), and the measurement channel's jump weight
  // reduced to kappa (1 - eta): the c^2 term of M r M^dagger supplies the
  // rest on average.
  const double k_eta = kappa_ * eta_;
  double c = 0.0;
  if (measured && k_eta > 0.0) {
    measurement_op_.left(meas_rho_, rho_in);
    const double mean = 2.0 * meas_rho_.trace().real();
    c = std::sqrt(k_eta) * (dW + std::sqrt(k_eta) * mean * dt_);
  }
  scratch_.noalias() = balance_ * rho_in;
  balanced_.noalias() = scratch_ * balance_;
  const Matrix& rho = balanced_;
  if (c != 0.0) measurement_op_.left(meas_rho_, rho);
  // scratch = M rho
  if (!jumps_.empty()) {
    decay_.left(scratch_, rho);
    scratch_ *= -0.5 * dt_;
    scratch_ += rho;
  } else {
    scratch_ = rho;
  }
  if (c != 0.0) scratch_ += c * meas_rho_;
  // next = (M rho) M^dagger
  next_ = scratch_;
  if (!jumps_.empty()) decay_.add_right_adjoint(next_, scratch_, -0.5 * dt_);
  if (c != 0.0) measurement_op_.add_right_adjoint(next_, scratch_, c);

  for (std::size_t k = 0; k < jumps_.size(); ++k) {
    const Jump& j = jumps_[k];
    double rate = j.rate;
    if (measured && static_cast<int>(k) == measurement_jump_) {
      rate = j.rate * (1.0 - eta_);
      if (rate == 0.0) continue;
    }
    j.op.left(scratch_, rho);
    j.op.add_right_adjoint(next_, scratch_, dt_ * rate);
  }
}

void SmeStepper::linear_update(const Matrix& rho, double innovation_coeff) {
  // rho G^dagger equals (G rho)^dagger only when rho is Hermitian.
  auto add_right_product = [&](const Matrix& left_product, const OpMatrix& g,
                               double coeff) {
    if (config_.symmetrize) {
      next_ += coeff * left_product.adjoint();
    } else {
      g.add_right_adjoint(next_, rho, coeff);
    }
  };

  next_ = rho;
  if (config_.scheme == StepScheme::kEuler) {
    // -i dt (H rho - rho H)
    scratch_.noalias() = rotation_ * rho;
    next_ += Complex(0.0, -dt_) * scratch_;
    if (config_.symmetrize) {
      next_ += Complex(0.0, dt_) * scratch_.adjoint();
    } else {
      next_.noalias() += Complex(0.0, dt_) * (rho * rotation_);
    }
  }

  if (!jumps_.empty()) {
    decay_.left(scratch_, rho);
    next_ -= (0.5 * dt_) * scratch_;
    add_right_product(scratch_, decay_, -0.5 * dt_);
  }
  bool have_meas_rho = false;
  for (std::size_t k = 0; k < jumps_.size(); ++k) {
    const Jump& j = jumps_[k];
    Matrix& l_rho =
        static_cast<int>(k) == measurement_jump_ ? meas_rho_ : scratch_;
    j.op.left(l_rho, rho);
    if (&l_rho == &meas_rho_) have_meas_rho = true;
    j.op.add_right_adjoint(next_, l_rho, dt_ * j.rate);
  }

  if (innovation_coeff != 0.0) {
    if (!have_meas_rho) measurement_op_.left(meas_rho_, rho);
    // Tr[(A + A^dagger) rho] = 2 Re Tr[A rho]
    const double mean = 2.0 * meas_rho_.trace().real();
    next_ += innovation_coeff * meas_rho_;
    add_right_product(meas_rho_, measurement_op_, innovation_coeff);
    next_ -= (innovation_coeff * mean) * rho;
  }
}

void SmeStepper::finish(Matrix& rho) {
  if (config_.scheme != StepScheme::kEuler) {
    scratch_.noalias() = rotation_ * next_;
    next_.noalias() = scratch_ * rotation_.adjoint();
  }

  const Complex tr = next_.trace();
  const double max_entry2 = next_.cwiseAbs2().maxCoeff();
  const bool kraus = config_.scheme == StepScheme::kKraus;
  // The Kraus form is normalized by construction; its pre-normalization
  // trace carries the measurement likelihood, not drift.
  const double drift = kraus ? 0.0 : std::abs(tr - 1.0);
  if (!std::isfinite(tr.real()) || !std::isfinite(max_entry2) ||
      drift > kBlowupTraceDeviation || !(tr.real() > 0.0) ||
      max_entry2 > kBlowupEntry * kBlowupEntry * tr.real() * tr.real()) {
    std::ostringstream msg;
    msg << "trace " << tr.real() << ", max |entry| " << std::sqrt(max_entry2);
    throw NumericalBlowup(msg.str());
  }
  diag_.max_trace_drift = std::max(diag_.max_trace_drift, drift);

  if (config_.symmetrize) {
    scratch_ = next_.adjoint();
    diag_.max_hermiticity_drift =
        std::max(diag_.max_hermiticity_drift,
                 std::sqrt((next_ - scratch_).cwiseAbs2().maxCoeff()));
    rho = 0.5 * (next_ + scratch_);
  } else {
    rho.swap(next_);
  }
  if (config_.renormalize || kraus) rho /= rho.trace().real();
}

namespace {

SmeStepper make_stepper(const SmeTerms& terms, double dt,
                        const StepperConfig& config) {
  StepperConfig c = config;
  c.dt = dt;
  return SmeStepper(terms, c);
}

}  // namespace

QuantumState em_step_sampled(const SmeTerms& terms, const QuantumState& state,
                             double dt, double dW,
                             const StepperConfig& config) {
  require_space(terms.space(), state.space(), "em_step_sampled");
  SmeStepper stepper = make_stepper(terms, dt, config);
  Matrix rho = state.rho();
  stepper.step_sampled(rho, dW);
  return {state.space(), std::move(rho)};
}

QuantumState em_step_driven(const SmeTerms& terms,
                            const Operator& lambda_hamiltonian,
                            const QuantumState& state, double dt,
                            double record_sample,
                            const StepperConfig& config) {
  require_space(terms.space(), state.space(), "em_step_driven");
  SmeTerms trial = terms;
  trial.hamiltonian = lambda_hamiltonian;
  SmeStepper stepper = make_stepper(trial, dt, config);
  Matrix rho = state.rho();
  stepper.step_driven(rho, record_sample);
  return {state.space(), std::move(rho)};
}

TrajectoryRecord simulate_record(const SmeTerms& terms,
                                 const QuantumState& initial,
                                 const StepperConfig& config, double duration,
                                 std::uint64_t seed, bool emit_truth) {
  require_space(terms.space(), initial.space(), "simulate_record");
  if (!(terms.kappa * terms.eta > 0.0)) {
    throw InvalidParam("record synthesis needs kappa * eta > 0");
  }
  config.validate();
  const double steps = std::round(duration / config.dt);
  if (!(steps >= 2.0) || !std::isfinite(steps)) {
    throw InvalidParam("duration / dt must give at least 2 samples");
  }
  const auto n = static_cast<std::size_t>(steps);

  SmeStepper stepper(terms, config);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::normal_distribution<double> normal(0.0, std::sqrt(config.dt));
  const double noise_scale =
      1.0 / (std::sqrt(4.0 * terms.kappa * terms.eta) * config.dt);

  TrajectoryRecord rec;
  rec.times.resize(n);
  rec.currents.resize(n);
  if (emit_truth) rec.truth.emplace(n);

  Matrix rho = initial.rho();
  for (std::size_t j = 0; j < n; ++j) {
    const double t = static_cast<double>(j) * config.dt;
    const double mean = stepper.observable_mean(rho);
    const double dW = normal(rng);
    rec.times[j] = t;
    rec.currents[j] = mean + dW * noise_scale;
    if (emit_truth) (*rec.truth)[j] = mean;
    try {
      stepper.step_sampled(rho, dW);
    } catch (const NumericalBlowup& e) {
      rethrow_at_step(e, j, t);
    }
  }

  rec.meta.dt = config.dt;
  rec.meta.tau = static_cast<double>(n) * config.dt;
  rec.meta.n = n;
  rec.meta.seed = seed;
  rec.meta.dim = terms.space().dim();
  rec.meta.kappa = terms.kappa;
  rec.meta.eta = terms.eta;
  return rec;
}

EstimatorRun run_estimator(const SmeTerms& terms, const QuantumState& initial,
                           const StepperConfig& config,
                           const TrajectoryRecord& record) {
  require_space(terms.space(), initial.space(), "run_estimator");
  if (record.size() == 0) throw EmptyRecord("record has no samples");
  config.validate();
  const double ratio = record.meta.dt / config.dt;
  const double substeps_f = std::round(ratio);
  if (substeps_f < 1.0 || std::abs(ratio - substeps_f) > 1e-9 * ratio) {
    std::ostringstream msg;
    msg << "estimator dt " << config.dt << " does not divide record dt "
        << record.meta.dt;
    throw DtMismatch(msg.str());
  }
  const auto substeps = static_cast<std::size_t>(substeps_f);

  SmeStepper stepper(terms, config);
  Matrix rho = initial.rho();
  EstimatorRun run{record.times, std::vector<double>(record.size()),
                   initial, min_eigen(rho), 0.0};

  for (std::size_t j = 0; j < record.size(); ++j) {
    run.cond_means[j] = stepper.observable_mean(rho);
    try {
      for (std::size_t s = 0; s < substeps; ++s) {
        stepper.step_driven(rho, record.currents[j]);
      }
    } catch (const NumericalBlowup& e) {
      rethrow_at_step(e, j, record.times[j]);
    }
    if ((j + 1) % kEigenCheckInterval == 0) {
      run.min_eigen_seen = std::min(run.min_eigen_seen, min_eigen(rho));
    }
  }
  run.min_eigen_seen = std::min(run.min_eigen_seen, min_eigen(rho));
  run.trace_drift_seen = stepper.diagnostics().max_trace_drift;
  run.final_state = QuantumState(initial.space(), std::move(rho));
  return run;
}

std::vector<double> propagate_mean(const SmeTerms& terms,
                                   const QuantumState& initial,
                                   const StepperConfig& config,
                                   std::size_t steps) {
  require_space(terms.space(), initial.space(), "propagate_mean");
  SmeStepper stepper(terms, config);
  Matrix rho = initial.rho();
  std::vector<double> means(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    means[j] = stepper.observable_mean(rho);
    try {
      stepper.step_unconditional(rho);
    } catch (const NumericalBlowup& e) {
      rethrow_at_step(e, j, static_cast<double>(j) * config.dt);
    }
  }
  return means;
}

}  // namespace qpe
