#include "qpe/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "qpe/errors.hpp"

namespace qpe {

namespace {

void require_same_space(const HilbertSpace& a, const HilbertSpace& b,
                        const char* where) {
  if (!(a == b)) {
    std::ostringstream msg;
    msg << where << ": dim " << a.dim() << " vs " << b.dim();
    throw DimensionMismatch(msg.str());
  }
}

// Principal square root of a Hermitian PSD matrix; tiny negative
// eigenvalues from integration noise are clamped to zero.
// Eigenvalues at rounding level are treated as exact zeros so a pure state's
// square root is not polluted by sqrt(1e-16) terms.
Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cutoff = 64.0 * std::numeric_limits<double>::epsilon() *
                        std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd roots = ev.unaryExpr(
      [cutoff](double v) { return v > cutoff ? std::sqrt(v) : 0.0; });
  return eig.eigenvectors() * roots.asDiagonal() *
         eig.eigenvectors().adjoint();
}

}  // namespace

HilbertSpace::HilbertSpace(int dim) : dim_(dim) {
  if (dim < 2) {
    throw InvalidParam("Hilbert space dimension must be >= 2, got " +
                       std::to_string(dim));
  }
}

Operator::Operator(HilbertSpace space, Matrix entries)
    : space_(space), entries_(std::move(entries)) {
  if (entries_.rows() != space_.dim() || entries_.cols() != space_.dim()) {
    std::ostringstream msg;
    msg << "operator entries are " << entries_.rows() << "x"
        << entries_.cols() << ", space dim " << space_.dim();
    throw DimensionMismatch(msg.str());
  }
}

Operator Operator::adjoint() const { return {space_, entries_.adjoint()}; }

bool Operator::is_hermitian(double tol) const {
  return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

Operator operator+(const Operator& a, const Operator& b) {
  require_same_space(a.space_, b.space_, "operator+");
  return {a.space_, a.entries_ + b.entries_};
}

Operator operator-(const Operator& a, const Operator& b) {
  require_same_space(a.space_, b.space_, "operator-");
  return {a.space_, a.entries_ - b.entries_};
}

Operator operator*(const Operator& a, const Operator& b) {
  require_same_space(a.space_, b.space_, "operator*");
  return {a.space_, a.entries_ * b.entries_};
}

Operator operator*(Complex s, const Operator& a) {
  return {a.space_, s * a.entries_};
}

Operator operator*(double s, const Operator& a) {
  return {a.space_, s * a.entries_};
}

QuantumState::QuantumState(HilbertSpace space, Matrix rho)
    : space_(space), rho_(std::move(rho)) {
  if (rho_.rows() != space_.dim() || rho_.cols() != space_.dim()) {
    std::ostringstream msg;
    msg << "density matrix is " << rho_.rows() << "x" << rho_.cols()
        << ", space dim " << space_.dim();
    throw DimensionMismatch(msg.str());
  }
}

double QuantumState::purity() const {
  // Tr[rho^2] = sum_ij rho_ij rho_ji
  return (rho_.cwiseProduct(rho_.transpose())).sum().real();
}

double QuantumState::hermiticity_error() const {
  return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
}

double QuantumState::min_eigenvalue() const {
  Matrix herm = 0.5 * (rho_ + rho_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(herm, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void QuantumState::check_physical() const {
  const Complex tr = trace();
  if (std::abs(tr - Complex(1.0, 0.0)) > kTraceTol) {
    std::ostringstream msg;
    msg << "trace " << tr.real() << "+" << tr.imag() << "i";
    throw NonPhysicalState(msg.str());
  }
  if (const double h = hermiticity_error(); h > kHermitianTol) {
    throw NonPhysicalState("hermiticity error " + std::to_string(h));
  }
  if (const double e = min_eigenvalue(); e < kEigenFloor) {
    throw NonPhysicalState("min eigenvalue " + std::to_string(e));
  }
}

Ladder build_ladder(const HilbertSpace& space) {
  const int n = space.dim();
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  Matrix adag = a.adjoint();
  return {Operator(space, std::move(a)), Operator(space, std::move(adag))};
}

Quadratures build_quadratures(const HilbertSpace& space,
                              QuadratureConvention convention) {
  const auto [a, adag] = build_ladder(space);
  const Complex i(0.0, 1.0);
  const double scale =
      convention == QuadratureConvention::kWide ? 1.0 : 1.0 / std::sqrt(2.0);
  Matrix x = scale * (a.matrix() + adag.matrix());
  Matrix p = (scale * i) * (adag.matrix() - a.matrix());
  return {Operator(space, std::move(x)), Operator(space, std::move(p))};
}

Operator identity(const HilbertSpace& space) {
  return {space, Matrix::Identity(space.dim(), space.dim())};
}

Operator number_operator(const HilbertSpace& space) {
  Matrix n = Matrix::Zero(space.dim(), space.dim());
  for (int k = 0; k < space.dim(); ++k) n(k, k) = static_cast<double>(k);
  return {space, std::move(n)};
}

QuantumState fock_density(const HilbertSpace& space, int n) {
  if (n < 0 || n >= space.dim()) {
    throw InvalidParam("Fock level " + std::to_string(n) +
                       " outside truncation " + std::to_string(space.dim()));
  }
  Matrix rho = Matrix::Zero(space.dim(), space.dim());
  rho(n, n) = 1.0;
  return {space, std::move(rho)};
}

namespace {

Eigen::VectorXcd coherent_amplitudes(const HilbertSpace& space,
                                     Complex alpha) {
  Eigen::VectorXcd c(space.dim());
  c(0) = std::exp(-0.5 * std::norm(alpha));
  for (int k = 1; k < space.dim(); ++k) {
    c(k) = c(k - 1) * alpha / std::sqrt(static_cast<double>(k));
  }
  return c;
}

}  // namespace

double coherent_truncation_deficit(const HilbertSpace& space, Complex alpha) {
  return std::max(0.0, 1.0 - coherent_amplitudes(space, alpha).squaredNorm());
}

QuantumState coherent_density(const HilbertSpace& space, Complex alpha,
                              std::vector<std::string>* warnings) {
  Eigen::VectorXcd c = coherent_amplitudes(space, alpha);
  const double norm2 = c.squaredNorm();
  if (warnings != nullptr && std::norm(alpha) > space.dim() / 4.0) {
    std::ostringstream msg;
    msg << "TruncationWarning: |alpha|^2 = " << std::norm(alpha)
        << " exceeds dim/4 = " << space.dim() / 4.0
        << " (norm deficit " << 1.0 - norm2 << ")";
    warnings->push_back(msg.str());
  }
  c /= std::sqrt(norm2);
  Matrix rho = c * c.adjoint();
  // Pin the trace to exactly one.
  rho /= rho.trace().real();
  return {space, std::move(rho)};
}

Complex expect(const QuantumState& state, const Operator& op) {
  require_same_space(state.space(), op.space(), "expect");
  // Tr[rho A] = sum_ij rho_ij A_ji
  return state.rho().cwiseProduct(op.matrix().transpose()).sum();
}

double fidelity(const QuantumState& a, const QuantumState& b) {
  require_same_space(a.space(), b.space(), "fidelity");
  for (const QuantumState* s : {&a, &b}) {
    if (const double e = s->min_eigenvalue();
        e < QuantumState::kEigenFloor) {
      throw NonPhysicalState("fidelity argument has eigenvalue " +
                             std::to_string(e));
    }
  }
  const Matrix ha = 0.5 * (a.rho() + a.rho().adjoint());
  const Matrix hb = 0.5 * (b.rho() + b.rho().adjoint());
  // Tr sqrt(sa b sa) is the trace norm of sa sb, whose singular values are
  // those of its adjoint sb sa: the result is symmetric by construction.
  const Matrix prod = psd_sqrt(ha) * psd_sqrt(hb);
  Eigen::JacobiSVD<Matrix> svd(prod);
  const double root_sum = svd.singularValues().sum();
  return std::clamp(root_sum * root_sum, 0.0, 1.0);
}

}  // namespace qpe
