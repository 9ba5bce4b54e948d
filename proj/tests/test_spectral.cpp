#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "qpe/errors.hpp"
#include "qpe/estimate.hpp"
#include "qpe/spectral.hpp"
#include "support.hpp"

using namespace qpe;
using qpe::testing::Gen;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  v.back() = hi;
  return v;
}

Psd tabulate(const std::vector<double>& w, auto&& fn) {
  Psd p{w, {}};
  for (double x : w) p.values.push_back(fn(x));
  return p;
}

std::vector<double> white(Gen& g, std::size_t n, double sigma) {
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * g.normal();
  return v;
}

}  // namespace

TEST_CASE("periodogram of white noise") {
  Gen g(101);
  const double dt = 1e-3;
  const auto x = white(g, 1 << 16, 1.0);
  const Psd p = periodogram(x, dt, 16);
  const std::size_t len = 2 * ((1 << 16) / 17);
  REQUIRE(p.size() == len / 2 + 1);
  CHECK(p.frequencies[1] == doctest::Approx(2.0 * kPi / (len * dt)));
  double mean = 0.0;
  for (std::size_t k = 1; k + 1 < p.size(); ++k) mean += p.values[k];
  mean /= static_cast<double>(p.size() - 2);
  CHECK(std::abs(mean / (2.0 * dt) - 1.0) < 0.1);

  for (int trial = 0; trial < 5; ++trial) {
    const auto y = white(g, (1 << 14) + 17 * trial, g.uniform(0.5, 3.0));
    for (auto w : {Window::kHann, Window::kRectangular}) {
      const double power = psd_power(periodogram(y, dt, 8, w));
      CHECK(std::abs(power / qpe::testing::variance_of(y) - 1.0) < 0.05);
    }
  }
}

TEST_CASE("periodogram of deterministic signals") {
  const double dt = 1e-2;
  const std::size_t n = 4096;
  const int segments = 3;
  const std::size_t len = 2 * (n / (segments + 1));
  SUBCASE("sinusoid lands in its bin") {
    const int bin = 37;
    const double ws = 2.0 * kPi * bin / (len * dt);
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = std::sin(ws * j * dt + 0.3);
    const Psd p = periodogram(x, dt, segments);
    const auto peak = std::max_element(p.values.begin(), p.values.end()) - p.values.begin();
    CHECK(peak == bin);
    CHECK(p.frequencies[peak] == doctest::Approx(ws));
  }
  SUBCASE("constant signal: all power at DC") {
    std::vector<double> x(n, 2.5);
    const Psd p = periodogram(x, dt, segments, Window::kRectangular);
    CHECK(p.values[0] > 0.0);
    for (std::size_t k = 1; k < p.size(); ++k) CHECK(p.values[k] <= 1e-20 * p.values[0]);
  }
  SUBCASE("argument checks") {
    std::vector<double> few(7, 1.0);
    CHECK_THROWS_AS(periodogram(few, dt, 4), TooFewSamples);
    CHECK_THROWS_AS(periodogram(few, dt, 0), InvalidParam);
    CHECK_THROWS_AS(periodogram(few, 0.0, 1), InvalidParam);
  }
}

TEST_CASE("residual spectrum at the true parameters sits at the imprecision level") {
  const ModelSpec m = make_model("levitated");
  const auto rec = simulate_experiment(m, {{"f", 1.0}}, {}, 20.0, 31, false);
  EstimationProblem p{.model = m, .record = rec, .settings = {}};
  const auto run = run_at(p, ParamPoint{{1.0}});
  std::vector<double> residual(rec.size());
  for (std::size_t j = 0; j < rec.size(); ++j) residual[j] = rec.currents[j] - run.cond_means[j];
  const Psd s = periodogram(residual, rec.meta.dt, 16);
  // White noise of variance 1 / (4 kappa eta dt): one-sided level 1 / (2 kappa eta).
  const double level = 1.0 / (2.0 * rec.meta.kappa * rec.meta.eta);
  double mid = 0.0;
  std::size_t count = 0;
  for (std::size_t k = s.size() / 4; k < 3 * s.size() / 4; ++k, ++count) mid += s.values[k];
  CHECK(std::abs(mid / count / level - 1.0) < 0.25);
}

TEST_CASE("psd helpers") {
  const Psd p = tabulate(linspace(0.0, 10.0, 11), [](double w) { return 1.0 + w; });
  CHECK_NOTHROW(p.validate());
  const Psd r = resample(p, {0.5, 2.25, 10.0});
  CHECK(r.values == std::vector<double>{1.5, 3.25, 11.0});
  CHECK_THROWS_AS(resample(p, {-0.1}), BandOutOfRange);
  CHECK_THROWS_AS(resample(p, {10.5}), BandOutOfRange);
  CHECK_THROWS_AS((Psd{{0.0, 0.0}, {1.0, 1.0}}).validate(), InvalidParam);
  CHECK_THROWS_AS((Psd{{0.0, 1.0}, {1.0, -1.0}}).validate(), InvalidParam);
  CHECK_NOTHROW((Psd{{0.0, 1.0}, {1.0, INFINITY}}).validate());

  const Psd chi2 = damped_susceptibility2({0.0, 2.0, 3.0}, 2.0, 0.5);
  CHECK(chi2.values[0] == doctest::Approx(1.0 / 16.0));
  CHECK(chi2.values[1] == doctest::Approx(1.0 / 1.0));
  CHECK(chi2.values[2] == doctest::Approx(1.0 / (25.0 + 2.25)));
}

TEST_CASE("qcrb spectral bound") {
  const auto w = linspace(0.0, 20.0, 401);
  const Psd flat = tabulate(w, [](double) { return 1.0; });

  SUBCASE("no prior, constant product") {
    const Psd chi2 = tabulate(w, [](double) { return 2.0; });
    const Psd s_fba = tabulate(w, [](double) { return 0.25; });
    const Psd b = qcrb_spectral_bound({.chi2 = chi2, .s_fba = s_fba});
    for (double v : b.values) CHECK(v == doctest::Approx(1.0 / (4.0 * 0.5)).epsilon(1e-15));
  }

  SUBCASE("vanishing prior drives the bound to zero") {
    for (double s : {1e-12, 0.0}) {
      const Psd prior = tabulate(w, [s](double) { return s; });
      const Psd b = qcrb_spectral_bound({.chi2 = flat, .s_fba = flat, .s_f = prior});
      for (double v : b.values) CHECK(v <= 1e-12);
    }
  }

  SUBCASE("Lorentzian susceptibility against direct evaluation") {
    const double w0 = 5.0, gamma = 0.3, sfba = 0.7;
    const auto fine = linspace(0.0, 20.0, 8001);
    const Psd chi2 = damped_susceptibility2(fine, w0, gamma);
    const Psd b = qcrb_spectral_bound({.chi2 = chi2, .s_fba = tabulate(fine, [&](double) { return sfba; })});
    for (std::size_t i = 0; i < fine.size(); i += 37) {
      const double om = fine[i];
      const double direct =
          ((w0 * w0 - om * om) * (w0 * w0 - om * om) + gamma * gamma * om * om) / (4.0 * sfba);
      CHECK(std::abs(b.values[i] - direct) <= 1e-10 * std::max(1.0, direct));
    }
  }

  SUBCASE("grids must agree") {
    const Psd other = tabulate(linspace(0.0, 20.0, 400), [](double) { return 1.0; });
    CHECK_THROWS_AS(qcrb_spectral_bound({.chi2 = flat, .s_fba = other}), GridMismatch);
    CHECK_THROWS_AS(smoothing_integrand(flat, other), GridMismatch);
  }
}

TEST_CASE("pointwise ordering on random spectra") {
  // S_z = S_fba + 1 / (4 |chi|^2 S_fba) + S_th: backaction, imprecision and
  // thermal parts of the total force noise.
  Gen g(55);
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = linspace(0.0, g.uniform(1.0, 50.0), static_cast<std::size_t>(g.integer(3, 60)));
    const Psd chi2 = tabulate(w, [&](double) { return std::exp(g.uniform(-8.0, 8.0)); });
    const Psd s_fba = tabulate(w, [&](double) { return std::exp(g.uniform(-8.0, 8.0)); });
    const Psd s_th = tabulate(w, [&](double) { return g.uniform(0.0, 5.0); });
    Psd s_z = s_fba;
    for (std::size_t i = 0; i < w.size(); ++i) {
      s_z.values[i] += 1.0 / (4.0 * chi2.values[i] * s_fba.values[i]) + s_th.values[i];
    }
    PriorSpectrum prior = SymbolicInfinite{};
    if (trial % 2) prior = tabulate(w, [&](double) { return std::exp(g.uniform(-8.0, 8.0)); });
    const Psd bound = qcrb_spectral_bound({.chi2 = chi2, .s_fba = s_fba, .s_f = prior});
    const Psd integrand = smoothing_integrand(s_z, prior);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(bound.values[i] <= integrand.values[i] * (1.0 + 1e-12));
      CHECK(integrand.values[i] <= s_z.values[i] * (1.0 + 1e-12));
      CHECK(s_z.values[i] <= 2.0 * s_z.values[i]);
    }
  }
}

TEST_CASE("smoothing variance bound") {
  const auto w = linspace(0.0, 20.0, 201);
  const double level = 0.37;
  const Psd flat = tabulate(w, [&](double) { return level; });

  SUBCASE("constant spectrum gives S W / pi") {
    for (double width : {0.5, 3.3, 20.0}) {
      const double v = smoothing_variance_bound(flat, SymbolicInfinite{}, {-width, width});
      CHECK(std::abs(v - level * width / kPi) <= 1e-9);
    }
  }

  SUBCASE("vanishing prior") {
    const Psd tiny = tabulate(w, [](double) { return 1e-14; });
    CHECK(smoothing_variance_bound(flat, tiny, {-5.0, 5.0}) < 1e-13);
    const Psd zero = tabulate(w, [](double) { return 0.0; });
    CHECK(smoothing_variance_bound(flat, zero, {-5.0, 5.0}) == 0.0);
  }

  SUBCASE("non-negative and monotone in band width") {
    const Psd shaped = tabulate(w, [](double x) { return 1.0 / (1.0 + (x - 4.0) * (x - 4.0)); });
    double prev = 0.0;
    for (double width = 0.1; width <= 20.0; width += 0.7) {
      const double v = smoothing_variance_bound(shaped, SymbolicInfinite{}, {-width, width});
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(smoothing_variance_bound(shaped, SymbolicInfinite{}, {1.0, 1.0}) == 0.0);
  }

  SUBCASE("halving the spacing converges") {
    auto lorentz = [](double x) { return 0.2 + 1.0 / (1.0 + (x - 4.0) * (x - 4.0)); };
    auto prior = [](double x) { return 3.0 / (1.0 + x * x); };
    const auto coarse = linspace(0.0, 20.0, 20001);
    const auto fine = linspace(0.0, 20.0, 40001);
    const double vc = smoothing_variance_bound(tabulate(coarse, lorentz),
                                               tabulate(coarse, prior), {-12.0, 12.0});
    const double vf = smoothing_variance_bound(tabulate(fine, lorentz),
                                               tabulate(fine, prior), {-12.0, 12.0});
    CHECK(std::abs(vc - vf) < 1e-6 * vf);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(smoothing_variance_bound(flat, SymbolicInfinite{}, {-25.0, 1.0}),
                    BandOutOfRange);
    CHECK_THROWS_AS(smoothing_variance_bound(flat, SymbolicInfinite{}, {2.0, 1.0}),
                    InvalidParam);
  }
}

TEST_CASE("bandwidth variance") {
  const auto w = linspace(0.0, 20.0, 201);
  const double level = 1.7;
  const Psd flat = tabulate(w, [&](double) { return level; });
  const Band band{-20.0, 20.0};

  CHECK(bandwidth_variance(flat, Bandwidth::zero(), band) == 0.0);
  CHECK(bandwidth_variance(flat, Bandwidth::function([](double) { return 0.0; }), band) == 0.0);

  for (double tau : {1.0, 7.3, 100.0}) {
    const double v = bandwidth_variance(flat, Bandwidth::integration_time(tau), band);
    CHECK(std::abs(v - 2.0 * level / tau) <= 1e-9);
    const double v2 = bandwidth_variance(flat, Bandwidth::integration_time(2.0 * tau), band);
    CHECK(v2 == doctest::Approx(0.5 * v).epsilon(1e-12));
  }

  // Weight-function path against the exact indicator path.
  const auto fine = linspace(0.0, 20.0, 20001);
  const Psd flat_fine = tabulate(fine, [&](double) { return level; });
  const double smooth = bandwidth_variance(
      flat_fine, Bandwidth::function([](double x) { return std::exp(-x * x); }), band);
  CHECK(std::abs(smooth - 2.0 * level * std::sqrt(kPi) / (2.0 * kPi)) < 1e-6);

  const Bandwidth ind = Bandwidth::indicator(1.0, 3.0);
  CHECK(ind(2.5) == 1.0);
  CHECK(ind(4.5) == 0.0);
  CHECK(bandwidth_variance(flat, ind, band) == doctest::Approx(2.0 * level * 2.0 / (2.0 * kPi)));
  CHECK_THROWS_AS(bandwidth_variance(flat, ind, {-30.0, 1.0}), BandOutOfRange);
}
