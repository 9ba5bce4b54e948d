#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qpe/errors.hpp"
#include "qpe/estimate.hpp"
#include "support.hpp"

using namespace qpe;

namespace {

EstimationProblem levitated_problem(double tau, std::uint64_t seed,
                                    LossVariant variant = LossVariant::kOracleMean) {
  const ModelSpec m = make_model("levitated");
  EstimationProblem p{.model = m,
                      .record = simulate_experiment(m, {{"f", 1.0}}, {}, tau, seed, true),
                      .settings = {}};
  p.settings.kind.variant = variant;
  p.settings.threads = 1;
  return p;
}

double sum_sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_CASE("loss_eval") {
  const EstimationProblem p = levitated_problem(2.0, 11);
  const auto& rec = p.record;
  const EstimatorRun truth_run = run_at(p, ParamPoint{{1.0}});

  SUBCASE("oracle loss vanishes at the truth") {
    const double loss = loss_eval({}, rec, truth_run, 0.0);
    CHECK(loss >= 0.0);
    CHECK(loss <= 1e-10 * sum_sq(*rec.truth));
  }

  SUBCASE("residual loss at the truth sits on the noise floor") {
    const EstimationProblem big = levitated_problem(10.0, 12);
    const auto run = run_at(big, ParamPoint{{1.0}});
    const double per_sample =
        loss_eval({LossVariant::kRecordResidual, true}, big.record, run, 0.0);
    const double floor = 1.0 / (4.0 * big.record.meta.dt);
    CHECK(std::abs(per_sample / floor - 1.0) < 0.1);
  }

  SUBCASE("run equal to the currents gives exactly zero residual") {
    EstimatorRun echo = truth_run;
    echo.cond_means = rec.currents;
    CHECK(loss_eval({LossVariant::kRecordResidual}, rec, echo, 0.0) == 0.0);
  }

  SUBCASE("burn-in keeps samples with t > burn_in") {
    EstimatorRun offset = truth_run;
    offset.cond_means = *rec.truth;
    for (auto& v : offset.cond_means) v += 0.5;
    const double b = 0.5;
    std::size_t kept = 0;
    for (double t : rec.times) kept += t > b ? 1 : 0;
    CHECK(loss_eval({}, rec, offset, b) == doctest::Approx(0.25 * kept).epsilon(1e-12));
    CHECK(loss_eval({.normalize = true}, rec, offset, b) == doctest::Approx(0.25));
    CHECK(loss_eval({}, rec, offset, 0.0) ==
          doctest::Approx(0.25 * rec.size()).epsilon(1e-12));
    CHECK_THROWS_AS(loss_eval({}, rec, offset, rec.times.back()), InvalidParam);
  }

  SUBCASE("errors") {
    TrajectoryRecord bare = rec;
    bare.truth.reset();
    CHECK_THROWS_AS(loss_eval({}, bare, truth_run, 0.0), MissingTruth);
    CHECK_NOTHROW(loss_eval({LossVariant::kRecordResidual}, bare, truth_run, 0.0));
    EstimatorRun short_run = truth_run;
    short_run.cond_means.pop_back();
    short_run.times.pop_back();
    CHECK_THROWS_AS(loss_eval({}, rec, short_run, 0.0), AlignmentError);
    EstimatorRun shifted = truth_run;
    shifted.times[3] += 1e-6;
    CHECK_THROWS_AS(loss_eval({}, rec, shifted, 0.0), AlignmentError);
  }
}

TEST_CASE("grid spec") {
  const auto pts = GridSpec{0.0, 2.0, 41}.points();
  REQUIRE(pts.size() == 41);
  CHECK(pts[20] == 1.0);
  CHECK(pts.back() == 2.0);
  CHECK_THROWS_AS(GridSpec({1.0, 1.0, 5}).points(), InvalidGrid);
  CHECK_THROWS_AS(GridSpec({2.0, 1.0, 5}).points(), InvalidGrid);
  CHECK_THROWS_AS(GridSpec({0.0, 1.0, 1}).points(), InvalidGrid);
  CHECK_THROWS_AS(GridSpec({0.0, INFINITY, 3}).points(), InvalidGrid);
}

TEST_CASE("sweep_1d") {
  const EstimationProblem p = levitated_problem(3.0, 21);

  SUBCASE("levitated argmin at the true force") {
    const LossSurface s = sweep_1d(p, "f", {0.0, 2.0, 21});
    CHECK(s.argmin_point.values == std::vector<double>{1.0});
    CHECK(s.losses.size() == s.grid.size());
    for (double l : s.losses) CHECK(l >= 0.0);
    // Non-decreasing away from the minimum on both sides.
    for (std::size_t i = s.argmin_index; i + 1 < s.losses.size(); ++i) {
      CHECK(s.losses[i + 1] >= s.losses[i]);
    }
    for (std::size_t i = s.argmin_index; i > 0; --i) CHECK(s.losses[i - 1] >= s.losses[i]);
  }

  SUBCASE("oscillator frequency loss falls toward the truth") {
    const ModelSpec m = make_model("oscillator");
    EstimationProblem op{.model = m,
                         .record = simulate_experiment(m, {{"omega", 1.0}, {"gamma", 1.0}},
                                                       {}, 3.0, 5, true),
                         .settings = {}};
    op.settings.threads = 1;
    const LossSurface s = sweep_1d(op, "omega", {0.5, 1.5, 11});
    CHECK(s.argmin_point.values == std::vector<double>{1.0});
    for (std::size_t i = 0; i < 5; ++i) CHECK(s.losses[i] > s.losses[i + 1]);
    for (std::size_t i = 5; i < 10; ++i) CHECK(s.losses[i] < s.losses[i + 1]);
  }

  SUBCASE("degenerate grids") {
    CHECK_THROWS_AS(sweep_1d(p, "f", {1.0, 1.0, 1}), InvalidGrid);
    CHECK_THROWS_AS(sweep_1d(p, "f", {0.0, 1.0, 2}), InvalidGrid);
    CHECK_THROWS_AS(sweep_1d(p, "mass", {0.0, 1.0, 3}), InvalidParam);
  }

  SUBCASE("oracle loss without truth fails up front") {
    EstimationProblem bare = p;
    bare.record.truth.reset();
    CHECK_THROWS_AS(sweep_1d(bare, "f", {0.0, 2.0, 3}), MissingTruth);
  }

  SUBCASE("results do not depend on the thread count") {
    EstimationProblem many = p;
    many.settings.threads = 4;
    const LossSurface a = sweep_1d(p, "f", {0.0, 2.0, 9});
    const LossSurface b = sweep_1d(many, "f", {0.0, 2.0, 9});
    CHECK(a.losses == b.losses);
    CHECK(a.argmin_index == b.argmin_index);
  }
}

TEST_CASE("ties and failures") {
  SUBCASE("equal losses resolve to the smallest point") {
    const SmeTerms base = build_oscillator(ParamPoint{{1.0, 0.0}}, oscillator_defaults());
    const Operator zero(base.space(), Matrix::Zero(16, 16));
    const ModelSpec m = make_linear_model("inert", base, {{"u", zero}, {"v", zero}});
    EstimationProblem p{.model = m,
                        .record = simulate_experiment(m, {{"u", 0.0}, {"v", 0.0}}, {}, 0.5,
                                                      1, true),
                        .settings = {}};
    const LossSurface s1 = sweep_1d(p, "u", {-1.0, 1.0, 5});
    CHECK(s1.argmin_index == 0);
    const LossSurface s2 = sweep_2d(p, {"u", "v"}, {-1.0, 1.0, 3}, {-2.0, 2.0, 3});
    CHECK(s2.argmin_point.values == std::vector<double>{-1.0, -2.0});
  }

  SUBCASE("failed points are marked and skipped") {
    const ModelSpec m = make_model("oscillator");
    EstimationProblem p{.model = m,
                        .record = simulate_experiment(m, {{"omega", 1.0}, {"gamma", 1.0}}, {},
                                                      0.5, 2, true),
                        .settings = {}};
    const LossSurface s = sweep_1d(p, "gamma", {-1.0, 1.5, 6});
    CHECK(s.failed(0));
    CHECK(s.failed(1));
    CHECK(std::isnan(s.losses[0]));
    CHECK(!s.failed(2));
    CHECK(s.argmin_point.values == std::vector<double>{1.0});
    CHECK_THROWS_AS(sweep_1d(p, "gamma", {-2.0, -1.0, 3}), AllPointsFailed);
  }

  SUBCASE("every point diverging is reported as a whole") {
    EstimationProblem p = levitated_problem(20.0, 3);
    p.settings.stepper = {.dt = 0.0, .scheme = StepScheme::kEuler};
    p.record.meta.dt = 0.25;
    std::vector<double> t, i, x;
    for (std::size_t j = 0; j < 80; ++j) {
      t.push_back(0.25 * j);
      i.push_back(p.record.currents[j]);
      x.push_back((*p.record.truth)[j]);
    }
    p.record.times = t;
    p.record.currents = i;
    p.record.truth = x;
    p.record.meta.n = 80;
    CHECK_THROWS_AS(sweep_2d(p, {"omega0", "f"}, {6.0, 7.0, 2}, {0.5, 1.5, 2}),
                    AllPointsFailed);
  }
}

TEST_CASE("sweep_2d") {
  const EstimationProblem p = levitated_problem(2.0, 8);
  const double w = 2.0 * std::numbers::pi;
  const LossSurface s = sweep_2d(p, {"omega0", "f"}, {w, 1.2 * w, 3}, {0.0, 2.0, 5});
  CHECK(s.grid.size() == 15);
  CHECK(s.argmin_point.values == std::vector<double>{w, 1.0});
  // Row-major, last parameter fastest.
  CHECK(s.grid[1].values == std::vector<double>{w, 0.5});
  CHECK(s.grid[5].values[0] == s.axes[0][1]);

  const LossSurface line = sweep_1d(p, "f", {0.0, 2.0, 5});
  for (std::size_t i = 0; i < 5; ++i) CHECK(s.losses[i] == line.losses[i]);
  CHECK_THROWS_AS(sweep_2d(p, {"f", "f"}, {0.0, 1.0, 2}, {0.0, 1.0, 2}), InvalidGrid);
}

TEST_CASE("refine_min") {
  const EstimationProblem p = levitated_problem(3.0, 4);
  const LossSurface coarse = sweep_1d(p, "f", {0.0, 2.0, 41});

  SUBCASE("three rounds of shrink 10") {
    std::vector<LossSurface> history;
    const LossSurface fine = refine_min(p, coarse, 3, 10.0, &history);
    CHECK(std::abs(fine.argmin_point.values[0] - 1.0) <= 5e-5);
    REQUIRE(fine.refinement_trace.size() == 4);
    REQUIRE(history.size() == 4);
    for (std::size_t r = 1; r < fine.refinement_trace.size(); ++r) {
      const auto& round = fine.refinement_trace[r];
      const double width = round.bounds[0].second - round.bounds[0].first;
      CHECK(width == doctest::Approx(2.0 / std::pow(10.0, r)).epsilon(1e-9));
      CHECK(round.best_loss <= fine.refinement_trace[r - 1].best_loss);
    }
    const auto& last = fine.refinement_trace.back();
    CHECK(fine.argmin_point == last.argmin);
  }

  SUBCASE("one round equals one sweep over the shrunken bracket") {
    const LossSurface one = refine_min(p, coarse, 1, 10.0);
    const double c = coarse.argmin_point.values[0];
    std::vector<double> axis(41);
    for (int i = 0; i < 41; ++i) axis[i] = c + (i - 20) * (0.2 / 40.0);
    axis[20] = c;
    const LossSurface direct = sweep_axes(p, {"f"}, {axis});
    CHECK(one.axes == direct.axes);
    CHECK(one.losses == direct.losses);
    CHECK(one.argmin_point == direct.argmin_point);
  }

  SUBCASE("truth outside the bracket") {
    const LossSurface off = sweep_1d(p, "f", {-2.0, -1.0, 11});
    CHECK_THROWS_AS(refine_min(p, off, 3, 10.0), BracketCollapse);
  }

  SUBCASE("argument checks") {
    CHECK_THROWS_AS(refine_min(p, coarse, 0, 10.0), InvalidParam);
    CHECK_THROWS_AS(refine_min(p, coarse, 2, 1.0), InvalidParam);
  }
}

TEST_CASE("sensitivity") {
  auto surface_of = [](const std::vector<double>& x, auto&& fn) {
    LossSurface s;
    s.param_names = {"f"};
    s.axes = {x};
    for (double v : x) {
      s.grid.push_back(ParamPoint{{v}});
      s.losses.push_back(fn(v));
    }
    s.failures.assign(x.size(), "");
    return s;
  };
  const auto x = GridSpec{0.0, 2.0, 21}.points();

  SUBCASE("parabola: antisymmetric slope, inverse peaks beside the minimum") {
    const auto c = sensitivity(surface_of(x, [](double v) { return 3.0 * (v - 1.0) * (v - 1.0); }));
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
      CHECK(std::abs(c.dloss[i] + c.dloss[x.size() - 1 - i]) < 1e-8);
      CHECK(std::abs(c.dloss[i] - 6.0 * (x[i] - 1.0)) < 1e-8);
    }
    CHECK(c.flagged[10]);
    CHECK(c.inverse[10] == 0.0);
    CHECK((c.peak_index == 9 || c.peak_index == 11));
  }

  SUBCASE("flat region is flagged without infinities") {
    const auto c = sensitivity(surface_of(x, [](double v) { return v < 1.0 ? 5.0 : 5.0 + (v - 1.0); }));
    for (std::size_t i = 0; i < 9; ++i) CHECK(c.flagged[i]);
    for (double v : c.inverse) CHECK(std::isfinite(v));
    const auto flat = sensitivity(surface_of(x, [](double) { return 1.0; }));
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(flat.flagged[i]);
      CHECK(flat.inverse[i] == 0.0);
    }
  }

  SUBCASE("levitated sweep peaks at the true force") {
    const EstimationProblem p = levitated_problem(3.0, 4);
    const LossSurface s = sweep_1d(p, "f", {0.0, 2.0, 41});
    const auto c = sensitivity(s);
    const std::size_t hit = c.peak_index;
    CHECK(std::abs(static_cast<double>(hit) - static_cast<double>(s.argmin_index)) <= 1.0);
  }

  SUBCASE("shape errors") {
    CHECK_THROWS_AS(sensitivity(surface_of({0.0, 1.0}, [](double v) { return v; })),
                    InvalidGrid);
    LossSurface two_d = surface_of(x, [](double v) { return v; });
    two_d.axes.push_back({0.0});
    CHECK_THROWS_AS(sensitivity(two_d), InvalidGrid);
  }
}

TEST_CASE("robustness scan at zero perturbation") {
  const EstimationProblem p = levitated_problem(3.0, 6);
  const std::vector<double> eps{0.0};
  const RefineSettings refine{.initial = {0.5, 1.5, 11}, .rounds = 2, .shrink = 10.0};
  for (auto mode : {Perturbation::kAlpha, Perturbation::kOmega0}) {
    const auto rows = robustness_scan(p, "f", 1.0, mode, eps, refine);
    REQUIRE(rows.size() == 1);
    // Final resolution: 1 / 10 / 10^2 / 10 points.
    CHECK(rows[0].percent_error <= 100.0 * 1e-3);
  }
  CHECK_THROWS_AS(robustness_scan(p, "f", 0.0, Perturbation::kAlpha, eps, refine),
                  InvalidParam);
  const std::vector<double> bad{-1.0};
  CHECK_THROWS_AS(robustness_scan(p, "f", 1.0, Perturbation::kAlpha, bad, refine),
                  InvalidParam);
}
