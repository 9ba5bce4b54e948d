#pragma once

// Truncated Fock-space operator algebra. Operators and states are stored
// dense; the truncations used here stay below ~64 levels.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qpe {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

class HilbertSpace {
 public:
  // Throws InvalidParam for dim < 2.
  explicit HilbertSpace(int dim);

  int dim() const { return dim_; }
  bool operator==(const HilbertSpace&) const = default;

 private:
  int dim_;
};

class Operator {
 public:
  // Throws DimensionMismatch unless `entries` is dim x dim.
  Operator(HilbertSpace space, Matrix entries);

  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return entries_; }
  int dim() const { return space_.dim(); }

  Operator adjoint() const;
  bool is_hermitian(double tol = 0.0) const;

  friend Operator operator+(const Operator& a, const Operator& b);
  friend Operator operator-(const Operator& a, const Operator& b);
  friend Operator operator*(const Operator& a, const Operator& b);
  friend Operator operator*(Complex s, const Operator& a);
  friend Operator operator*(double s, const Operator& a);
  friend bool operator==(const Operator& a, const Operator& b) {
    return a.space_ == b.space_ && a.entries_ == b.entries_;
  }

 private:
  HilbertSpace space_;
  Matrix entries_;
};

// A density matrix. Construction only checks the shape; integrators may
// hand back slightly unphysical matrices, and `check_physical` is the
// explicit gate for the trace/Hermiticity/positivity tolerances.
class QuantumState {
 public:
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kHermitianTol = 1e-9;
  static constexpr double kEigenFloor = -1e-7;

  QuantumState(HilbertSpace space, Matrix rho);

  const HilbertSpace& space() const { return space_; }
  const Matrix& rho() const { return rho_; }
  int dim() const { return space_.dim(); }

  Complex trace() const { return rho_.trace(); }
  double purity() const;
  // max_ij |rho - rho^dagger|_ij
  double hermiticity_error() const;
  double min_eigenvalue() const;

  // Throws NonPhysicalState if any of the tolerances above is violated.
  void check_physical() const;

 private:
  HilbertSpace space_;
  Matrix rho_;
};

struct Ladder {
  Operator a;
  Operator adag;
};

// a|n> = sqrt(n)|n-1>, adag = a^dagger.
Ladder build_ladder(const HilbertSpace& space);

enum class QuadratureConvention {
  // x = a + a^dagger, p = i(a^dagger - a), [x, p] = 2i.
  kWide,
  // x = (a + a^dagger)/sqrt(2), p = i(a^dagger - a)/sqrt(2), [x, p] = i.
  kStandard,
};

struct Quadratures {
  Operator x;
  Operator p;
};

Quadratures build_quadratures(
    const HilbertSpace& space,
    QuadratureConvention convention = QuadratureConvention::kWide);

Operator identity(const HilbertSpace& space);
Operator number_operator(const HilbertSpace& space);

QuantumState fock_density(const HilbertSpace& space, int n);

// Probability mass of the coherent state that falls outside the truncated
// space, 1 - sum_{n<dim} |c_n|^2.
double coherent_truncation_deficit(const HilbertSpace& space, Complex alpha);

// |alpha><alpha| from c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!),
// renormalized to unit trace. When |alpha|^2 > dim/4 a "TruncationWarning"
// message is appended to `warnings` (if given); the state is still returned.
QuantumState coherent_density(const HilbertSpace& space, Complex alpha,
                              std::vector<std::string>* warnings = nullptr);

// Tr[rho op]. Throws DimensionMismatch.
Complex expect(const QuantumState& state, const Operator& op);

// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, clamped to [0, 1].
// Throws DimensionMismatch, or NonPhysicalState if either argument has an
// eigenvalue below QuantumState::kEigenFloor.
double fidelity(const QuantumState& a, const QuantumState& b);

}  // namespace qpe
