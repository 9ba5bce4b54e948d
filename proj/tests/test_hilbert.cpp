#include <doctest.h>

#include <cmath>

#include "qpe/errors.hpp"
#include "qpe/hilbert.hpp"
#include "support.hpp"

using namespace qpe;
using qpe::testing::Gen;
using qpe::testing::max_abs;

TEST_CASE("hilbert space rejects dim < 2") {
  CHECK_THROWS_AS(HilbertSpace(1), InvalidParam);
  CHECK_THROWS_AS(HilbertSpace(0), InvalidParam);
  CHECK(HilbertSpace(2).dim() == 2);
}

TEST_CASE("operator shape must match the space") {
  CHECK_THROWS_AS(Operator(HilbertSpace(3), Matrix::Zero(2, 2)), DimensionMismatch);
  CHECK_THROWS_AS(Operator(HilbertSpace(3), Matrix::Zero(3, 2)), DimensionMismatch);
}

TEST_CASE("ladder matrix elements") {
  const auto l2 = build_ladder(HilbertSpace(2));
  Matrix expect2 = Matrix::Zero(2, 2);
  expect2(0, 1) = 1.0;
  CHECK(l2.a.matrix() == expect2);

  const auto l3 = build_ladder(HilbertSpace(3));
  CHECK(l3.a.matrix()(1, 2) == Complex(std::sqrt(2.0)));
  for (int i = 1; i < 3; ++i) {
    for (int j = 0; j < i; ++j) CHECK(l3.a.matrix()(i, j) == Complex(0.0));
  }

  for (int n : {2, 5, 16, 33}) {
    const auto l = build_ladder(HilbertSpace(n));
    CHECK(l.a.matrix() == qpe::testing::ladder_oracle(n));
    CHECK(l.adag.matrix() == Matrix(l.a.matrix().adjoint()));
  }
}

TEST_CASE("number operator is diag(0..dim-1)") {
  for (int n : {2, 7, 16}) {
    const HilbertSpace s(n);
    const Matrix exact = number_operator(s).matrix();
    const auto l = build_ladder(s);
    const Matrix num = (l.adag * l.a).matrix();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        CHECK(exact(i, j) == Complex(i == j ? i : 0.0));
        if (i != j) CHECK(num(i, j) == Complex(0.0));
      }
      // sqrt(k)^2 is k up to one rounding.
      CHECK(std::abs(num(i, i) - Complex(i)) <= 1e-15 * i);
    }
  }
}

TEST_CASE("quadrature commutators away from the truncation edge") {
  const int n = 24;
  const HilbertSpace s(n);
  for (auto [conv, scale] : {std::pair{QuadratureConvention::kWide, 2.0},
                             std::pair{QuadratureConvention::kStandard, 1.0}}) {
    const auto [x, p] = build_quadratures(s, conv);
    CHECK(x.is_hermitian());
    CHECK(p.is_hermitian());
    const Matrix comm = x.matrix() * p.matrix() - p.matrix() * x.matrix();
    const Matrix target = Complex(0.0, scale) * Matrix::Identity(n, n);
    CHECK(max_abs((comm - target).topLeftCorner(n - 2, n - 2)) < 1e-12);
  }
}

TEST_CASE("wide x squared equals (a + a^dagger)^2") {
  const HilbertSpace s(12);
  const auto l = build_ladder(s);
  const Matrix sum = l.a.matrix() + l.adag.matrix();
  const auto x = build_quadratures(s).x;
  CHECK((x * x).matrix() == Matrix(sum * sum));
}

TEST_CASE("coherent states") {
  SUBCASE("vacuum") {
    const auto rho = coherent_density(HilbertSpace(6), 0.0);
    Matrix vac = Matrix::Zero(6, 6);
    vac(0, 0) = 1.0;
    CHECK(rho.rho() == vac);
  }
  SUBCASE("<a> = alpha") {
    const HilbertSpace s(32);
    const auto rho = coherent_density(s, 1.0);
    CHECK(std::abs(expect(rho, build_ladder(s).a) - Complex(1.0)) < 1e-8);
  }
  SUBCASE("alpha = 1+1i, dim 8: no warning, unit trace") {
    std::vector<std::string> warnings;
    const auto rho = coherent_density(HilbertSpace(8), {1.0, 1.0}, &warnings);
    CHECK(warnings.empty());
    CHECK(std::abs(rho.trace() - Complex(1.0)) < 1e-15);
    // The guideline is not a norm-deficit threshold: this state loses ~1e-3.
    CHECK(coherent_truncation_deficit(HilbertSpace(8), {1.0, 1.0}) > 1e-6);
  }
  SUBCASE("large amplitude warns but still returns a state") {
    std::vector<std::string> warnings;
    const auto rho = coherent_density(HilbertSpace(8), 2.0, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].rfind("TruncationWarning", 0) == 0);
    CHECK(std::abs(rho.trace() - Complex(1.0)) < 1e-12);
  }
  SUBCASE("constructed states are physical") {
    Gen g(11);
    for (int k = 0; k < 20; ++k) {
      const int n = g.integer(4, 20);
      const Complex alpha{g.uniform(-1, 1), g.uniform(-1, 1)};
      const auto rho = coherent_density(HilbertSpace(n), alpha);
      CHECK_NOTHROW(rho.check_physical());
      CHECK(rho.min_eigenvalue() >= QuantumState::kEigenFloor);
    }
  }
}

TEST_CASE("expectation values") {
  const HilbertSpace s(16);
  const auto vac = fock_density(s, 0);
  const auto x = build_quadratures(s).x;
  CHECK(std::abs(expect(vac, x)) < 1e-12);
  CHECK(std::abs(expect(vac, number_operator(s))) < 1e-12);
  const auto coh = coherent_density(s, 0.5);
  CHECK(std::abs(expect(coh, x) - Complex(1.0)) < 1e-8);

  Gen g(5);
  for (int k = 0; k < 20; ++k) {
    const auto rho = g.mixed_state(9);
    CHECK(std::abs(expect(rho, g.hermitian(9)).imag()) < 1e-9);
  }
  CHECK_THROWS_AS(expect(vac, identity(HilbertSpace(3))), DimensionMismatch);
}

TEST_CASE("fidelity") {
  const HilbertSpace s(12);
  const auto f0 = fock_density(s, 0);
  const auto f1 = fock_density(s, 1);
  CHECK(std::abs(fidelity(f0, f0) - 1.0) < 1e-9);
  CHECK(fidelity(f0, f1) < 1e-12);
  CHECK(std::abs(fidelity(f0, coherent_density(s, 0.3)) - std::exp(-0.09)) < 1e-6);

  Gen g(99);
  for (int k = 0; k < 100; ++k) {
    const int n = g.integer(2, 8);
    const auto a = k % 2 ? g.mixed_state(n) : g.pure_state(n);
    const auto b = g.mixed_state(n);
    const double fab = fidelity(a, b);
    CHECK(fab >= 0.0);
    CHECK(fab <= 1.0);
    CHECK(std::abs(fab - fidelity(b, a)) < 1e-8);
  }

  Matrix bad = Matrix::Zero(12, 12);
  bad(0, 0) = 1.5;
  bad(1, 1) = -0.5;
  CHECK_THROWS_AS(fidelity(f0, QuantumState(s, bad)), NonPhysicalState);
  CHECK_THROWS_AS(fidelity(f0, fock_density(HilbertSpace(4), 0)), DimensionMismatch);
}

TEST_CASE("check_physical gates the tolerances") {
  const HilbertSpace s(3);
  Matrix rho = Matrix::Zero(3, 3);
  rho(0, 0) = 1.0;
  CHECK_NOTHROW(QuantumState(s, rho).check_physical());
  rho(0, 0) = 1.0 + 1e-6;
  CHECK_THROWS_AS(QuantumState(s, rho).check_physical(), NonPhysicalState);
  rho(0, 0) = 1.0;
  rho(0, 1) = 1e-6;
  CHECK_THROWS_AS(QuantumState(s, rho).check_physical(), NonPhysicalState);
}
