#pragma once

// Shared generators and independent oracles for the test suites.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qpe/hilbert.hpp"

namespace qpe::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  Complex complex_normal() { return {normal(), normal()}; }

  Matrix matrix(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) m(i, j) = complex_normal();
    }
    return m;
  }

  // G G^dagger / Tr: full-rank mixed state.
  QuantumState mixed_state(int n) {
    const Matrix g = matrix(n);
    Matrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    return {HilbertSpace(n), rho};
  }

  QuantumState pure_state(int n) {
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v(i) = complex_normal();
    v.normalize();
    return {HilbertSpace(n), v * v.adjoint()};
  }

  Operator op(int n) { return {HilbertSpace(n), matrix(n)}; }

  Operator hermitian(int n) {
    const Matrix m = matrix(n);
    return {HilbertSpace(n), 0.5 * (m + m.adjoint())};
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Element-by-element Fock ladder, independent of build_ladder.
inline Matrix ladder_oracle(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Classical mean-field solution for the levitated model's wide quadratures:
//   x' = w p - (k/2) x,  p' = -w x - 2 w f - (k/2) p
// integrated with fine RK4 steps; returns x(t) at t = j * dt_out.
inline std::vector<double> levitated_mean_x(double omega, double f,
                                            double kappa, double x0, double p0,
                                            double dt_out, std::size_t n_out) {
  auto deriv = [&](double x, double p, double& dx, double& dp) {
    dx = omega * p - 0.5 * kappa * x;
    dp = -omega * x - 2.0 * omega * f - 0.5 * kappa * p;
  };
  const int sub = 20;
  const double h = dt_out / sub;
  std::vector<double> out(n_out);
  double x = x0, p = p0;
  for (std::size_t j = 0; j < n_out; ++j) {
    out[j] = x;
    for (int s = 0; s < sub; ++s) {
      double k1x, k1p, k2x, k2p, k3x, k3p, k4x, k4p;
      deriv(x, p, k1x, k1p);
      deriv(x + 0.5 * h * k1x, p + 0.5 * h * k1p, k2x, k2p);
      deriv(x + 0.5 * h * k2x, p + 0.5 * h * k2p, k3x, k3p);
      deriv(x + h * k3x, p + h * k3p, k4x, k4p);
      x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
      p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    }
  }
  return out;
}

// Per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("qpe_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace qpe::testing
