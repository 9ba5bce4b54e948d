#pragma once

// Conditional stochastic master equation for homodyne monitoring,
//
//   d rho = -i[H, rho] dt + sum_k rate_k D[L_k] rho dt
//           + sqrt(kappa eta) H[A] rho dW,
//
// and the record-driven estimator obtained by replacing dW with the
// innovation of a measured current,
//
//   sqrt(kappa eta) dW  ->  2 kappa eta (I - <X>_c) dt,
//
// where X is the Hermitian measured observable. Records are synthesized as
// I_j = <X>_c(t_j) + dW_j / (sqrt(4 kappa eta) dt) from the same increment
// that updates the state, so a filter with the true parameters and initial
// state replays the generating trajectory.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "qpe/hilbert.hpp"
#include "qpe/record.hpp"

namespace qpe {

struct Dissipator {
  Operator op;
  double rate = 0.0;
};

struct SmeTerms {
  Operator hamiltonian;
  // Includes the measurement channel (measurement_op, kappa).
  std::vector<Dissipator> dissipators;
  Operator measurement_op;
  Operator measured_observable;
  double kappa = 0.0;
  double eta = 1.0;

  const HilbertSpace& space() const { return hamiltonian.space(); }

  // Throws InvalidParam / DimensionMismatch when the invariants fail:
  // shared space, Hermitian H and observable, non-negative rates,
  // kappa >= 0, eta in [0, 1], and exactly one (measurement_op, kappa)
  // entry among the dissipators when kappa > 0.
  void validate() const;

  bool operator==(const SmeTerms&) const;
};

enum class StepScheme {
  // rho -> U [M rho M^dagger + dt sum rate' L rho L^dagger] U^dagger / Tr,
  // M = 1 - dt/2 sum rate L^dagger L + sqrt(kappa eta) dy A, with
  // dy = dW + sqrt(kappa eta) <A + A^dagger> dt and U = exp(-i H dt).
  // Agrees with the SME to first order in dt and keeps rho positive, so a
  // mismatched filter cannot leave the physical set. Always normalizes.
  // rho is first mapped to S^(-1/2) rho S^(-1/2) with M0 = 1 - dt/2 G and
  // S = M0^dagger M0 + dt sum rate L^dagger L, so the unconditional map is
  // exactly trace preserving and linear.
  kKraus,
  // rho -> U [rho + dt sum rate D[L] rho + innovation] U^dagger with
  // U = exp(-i H dt): exact Hamiltonian rotation composed with an
  // Euler-Maruyama step for the dissipative and stochastic parts. Trace is
  // preserved to rounding.
  kUnitarySplit,
  // rho -> rho + dt(-i[H, rho] + sum rate D[L] rho) + innovation.
  kEuler,
};

struct StepperConfig {
  double dt = 1e-3;
  bool renormalize = true;
  bool symmetrize = true;
  double burn_in_time = 0.0;
  StepScheme scheme = StepScheme::kKraus;

  // Throws InvalidParam for dt <= 0 or burn_in_time < 0.
  void validate() const;
};

// D[A] rho = A rho A^dagger - 1/2 {A^dagger A, rho}
Matrix dissipator_apply(const Operator& op, const QuantumState& state);

// H[A] rho = A rho + rho A^dagger - Tr[(A + A^dagger) rho] rho
Matrix innovation_apply(const Operator& op, const QuantumState& state);

// Health numbers accumulated over a run.
struct StepDiagnostics {
  double max_trace_drift = 0.0;
  double max_hermiticity_drift = 0.0;
};

// Precomputed single-step propagator for fixed (terms, dt). Not thread-safe
// (owns scratch buffers); make one per trajectory.
class SmeStepper {
 public:
  SmeStepper(const SmeTerms& terms, const StepperConfig& config);

  double dt() const { return dt_; }
  const HilbertSpace& space() const { return space_; }

  // <measured_observable> of rho (real part).
  double observable_mean(const Matrix& rho) const;

  // One step with an explicit Wiener increment dW.
  void step_sampled(Matrix& rho, double dW);

  // One step driven by a record sample; uses <X>_c of the incoming rho.
  void step_driven(Matrix& rho, double record_sample);

  // One step of the unconditional (Lindblad) evolution.
  void step_unconditional(Matrix& rho);

  const StepDiagnostics& diagnostics() const { return diag_; }

 private:
  void advance(Matrix& rho, double dW, bool measured);
  void kraus_update(const Matrix& rho, double dW, bool measured);
  void linear_update(const Matrix& rho, double innovation_coeff);
  // Rotation, blowup checks, symmetrization and normalization of next_.
  void finish(Matrix& rho);

  HilbertSpace space_;
  double dt_;
  StepperConfig config_;
  double kappa_;
  double eta_;
  Matrix observable_t_;  // transpose, for Tr[rho X] as a dot product
  // Banded operators (ladder, quadratures and their powers) are applied
  // as sparse products; anything denser stays dense.
  struct OpMatrix {
    bool is_sparse = false;
    Matrix dense;
    Eigen::SparseMatrix<Complex, Eigen::RowMajor> sparse;
    Eigen::SparseMatrix<Complex, Eigen::RowMajor> sparse_adj;

    explicit OpMatrix(const Matrix& m = {});
    // out = op * rho
    void left(Matrix& out, const Matrix& rho) const;
    // out += coeff * (m * op^dagger)
    void add_right_adjoint(Matrix& out, const Matrix& m, Complex coeff) const;
  };

  Matrix rotation_;      // exp(-i H dt), or H for kEuler
  OpMatrix decay_;       // sum rate L^dagger L
  Matrix balance_;       // S^(-1/2), S = M0^dagger M0 + dt sum rate L^dagger L
  Matrix balanced_;
  struct Jump {
    OpMatrix op;
    double rate;
  };
  std::vector<Jump> jumps_;
  int measurement_jump_ = -1;
  OpMatrix measurement_op_;
  Matrix next_;
  Matrix scratch_;
  Matrix meas_rho_;
  StepDiagnostics diag_;
};

// Single-step free functions; they rebuild the propagator on every call and
// are meant for tests and small experiments. The default is the literal
// Euler-Maruyama update.
QuantumState em_step_sampled(const SmeTerms& terms, const QuantumState& state,
                             double dt, double dW,
                             const StepperConfig& config = {
                                 .scheme = StepScheme::kEuler});
QuantumState em_step_driven(const SmeTerms& terms,
                            const Operator& lambda_hamiltonian,
                            const QuantumState& state, double dt,
                            double record_sample,
                            const StepperConfig& config = {
                                .scheme = StepScheme::kEuler});

// Integrates the sampled SME for round(duration / dt) samples with Gaussian
// increments from derive_seed(seed, 0). Throws InvalidParam if
// kappa * eta == 0 or fewer than 2 samples, NumericalBlowup on divergence.
// Only the sme-level metadata (dt, tau, n, seed, dim, kappa, eta) is filled.
TrajectoryRecord simulate_record(const SmeTerms& terms,
                                 const QuantumState& initial,
                                 const StepperConfig& config, double duration,
                                 std::uint64_t seed, bool emit_truth);

struct EstimatorRun {
  std::vector<double> times;
  std::vector<double> cond_means;
  QuantumState final_state;
  double min_eigen_seen = 0.0;
  double trace_drift_seen = 0.0;
};

// Runs the record-driven filter over the whole record. config.dt must equal
// record.meta.dt or divide it into an integer number of substeps (the
// record sample is held across substeps). Throws EmptyRecord, DtMismatch,
// NumericalBlowup.
EstimatorRun run_estimator(const SmeTerms& terms, const QuantumState& initial,
                           const StepperConfig& config,
                           const TrajectoryRecord& record);

// Unconditional (Lindblad) propagation with the same stepper, sampling
// <measured_observable> at every step. Used as the ensemble reference.
std::vector<double> propagate_mean(const SmeTerms& terms,
                                   const QuantumState& initial,
                                   const StepperConfig& config,
                                   std::size_t steps);

}  // namespace qpe
