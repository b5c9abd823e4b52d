#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "stomax/experiments.hpp"
#include "stomax/stats.hpp"

using namespace stomax;

namespace {

ConvergenceConfig small_convergence() {
    ConvergenceConfig cfg;
    cfg.grid = GridSpec(4, 1.0, 1.0);
    cfg.t_final = 0.25;
    cfg.dt_levels = {1.0 / 8.0, 1.0 / 16.0};
    cfg.dt_ref = 1.0 / 64.0;
    cfg.samples = 8;
    cfg.master_seed = 12;
    return cfg;
}

TraceConfig small_trace() {
    TraceConfig cfg;
    cfg.grid = GridSpec(4, 1.0, 1.0);
    cfg.t_final = 0.2;
    cfg.dt = 0.05;
    cfg.samples = 8;
    cfg.master_seed = 12;
    return cfg;
}

}  // namespace

TEST_CASE("error metric names") {
    CHECK(error_metric_from_name("final_time") == ErrorMetric::FinalTime);
    CHECK(error_metric_from_name("max_over_steps") == ErrorMetric::MaxOverSteps);
    CHECK(to_string(ErrorMetric::FinalTime) == "final_time");
    CHECK(to_string(ErrorMetric::MaxOverSteps) == "max_over_steps");
    CHECK_THROWS_AS(error_metric_from_name("last"), std::invalid_argument);
}

TEST_CASE("noise spec resolution") {
    const GridSpec grid(12, 1.0, 1.0);
    NoiseSpec noise;
    CHECK(noise.resolved_max_mode(grid) == 12);
    noise.max_mode = 5;
    CHECK(noise.resolved_max_mode(grid) == 5);

    NoiseSpec bad;
    bad.max_mode = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.max_mode = 0;
    bad.eta_threshold = -0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("convergence config validation") {
    ConvergenceConfig cfg;
    CHECK(cfg.dt_levels ==
          std::vector<double>{1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0,
                              1.0 / 512.0});
    CHECK_NOTHROW(cfg.validate());

    ConvergenceConfig c1 = small_convergence();
    c1.dt_ref = 1.0 / 8.0;  // not below the coarsest level
    CHECK_THROWS_AS(c1.validate(), std::invalid_argument);

    ConvergenceConfig c2 = small_convergence();
    c2.dt_ref = 1.0 / 24.0;  // 1/16 is not a multiple
    CHECK_THROWS_AS(c2.validate(), std::invalid_argument);

    ConvergenceConfig c3 = small_convergence();
    c3.t_final = 0.3;  // not a multiple of 1/8
    CHECK_THROWS_AS(c3.validate(), std::invalid_argument);

    ConvergenceConfig c4 = small_convergence();
    c4.dt_levels = {};
    CHECK_THROWS_AS(c4.validate(), std::invalid_argument);

    ConvergenceConfig c5 = small_convergence();
    c5.dt_levels = {1.0 / 8.0, 1.0 / 8.0};
    CHECK_THROWS_AS(c5.validate(), std::invalid_argument);

    ConvergenceConfig c6 = small_convergence();
    c6.dt_levels = {1.0 / 8.0, -1.0 / 16.0};
    CHECK_THROWS_AS(c6.validate(), std::invalid_argument);

    ConvergenceConfig c7 = small_convergence();
    c7.samples = 1;
    CHECK_THROWS_AS(c7.validate(), std::invalid_argument);

    ConvergenceConfig c8 = small_convergence();
    c8.threads = 0;
    CHECK_THROWS_AS(c8.validate(), std::invalid_argument);
}

TEST_CASE("trace config validation") {
    TraceConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.step_count() == 500);
    CHECK(small_trace().step_count() == 4);

    TraceConfig t1 = small_trace();
    t1.schemes = {SchemeKind::SEXP, SchemeKind::SEXP};
    CHECK_THROWS_AS(t1.validate(), std::invalid_argument);

    TraceConfig t2 = small_trace();
    t2.model.diffusion = DiffusionKind::SineMultiplicative;
    CHECK_THROWS_AS(t2.validate(), std::invalid_argument);

    TraceConfig t3 = small_trace();
    t3.model.drift = DriftKind::Identity;
    CHECK_THROWS_AS(t3.validate(), std::invalid_argument);

    TraceConfig t4 = small_trace();
    t4.grid = GridSpec(4, 2.0, 1.0);
    CHECK_THROWS_AS(t4.validate(), std::invalid_argument);

    TraceConfig t5 = small_trace();
    t5.dt = 0.5;  // larger than t_final
    CHECK_THROWS_AS(t5.validate(), std::invalid_argument);

    TraceConfig t6 = small_trace();
    t6.samples = 1;
    CHECK_THROWS_AS(t6.validate(), std::invalid_argument);

    TraceConfig t7 = small_trace();
    t7.schemes = {};
    CHECK_THROWS_AS(t7.validate(), std::invalid_argument);
}

TEST_CASE("drift rate vanishes with the amplitudes") {
    const GridSpec spec(4, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    const SpectralNoise noise = SpectralNoise::build(layout, 4);
    ModelSpec model;
    model.lambda_e = 0.0;
    model.lambda_h = 0.0;
    CHECK(theoretical_drift_rate(spec, noise, model) == 0.0);

    ModelSpec bad;
    bad.diffusion = DiffusionKind::UnitMultiplicative;
    CHECK_THROWS_AS(theoretical_drift_rate(spec, noise, bad), std::invalid_argument);
}

TEST_CASE("drift rate of a single resolved mode") {
    // One retained mode with unit electric amplitude: the discrete mass of
    // the basis function is exactly one, so the rate is the eigenvalue 3/2.
    const GridSpec spec(64, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    NoiseSpec cut;
    cut.max_mode = 1;
    const SpectralNoise noise = SpectralNoise::build(layout, cut.max_mode);
    REQUIRE(noise.mode_count() == 1);

    ModelSpec model;
    model.lambda_e = 1.0;
    model.lambda_h = 0.0;
    CHECK(theoretical_drift_rate(spec, noise, model) ==
          doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("drift rate matches sampled noise energy") {
    const GridSpec spec(4, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    const SpectralNoise noise = SpectralNoise::build(layout, 2);
    ModelSpec model;  // additive, lambda = 0.5 defaults
    const double rate = theoretical_drift_rate(spec, noise, model);
    CHECK(rate > 0.0);

    const double dt = 0.09;
    const FieldState zero_state = FieldState::zero(spec);
    Welford acc;
    for (std::uint32_t s = 0; s < 8000; ++s) {
        const BrownianPath path(301, s, noise.mode_count(), 1, dt);
        const FieldIncrements dw = sample_increments(spec, noise, path, 1, 0);
        const FieldState g = apply_diffusion(model, zero_state, dw);
        acc.add(v_inner(spec, g, g) / dt);
    }
    CHECK(std::abs(acc.mean - rate) < 5.0 * acc.std_error());
}

TEST_CASE("initial condition structure") {
    const GridSpec spec(4, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    const FieldState u = initial_condition(spec, layout, 5);

    CHECK(u.e3(2, 2) == doctest::Approx(0.1).epsilon(1e-15));  // bump peak at center
    CHECK(pec_satisfied(u));
    CHECK(u.e3(1, 1) == doctest::Approx(0.1 * std::exp(-50.0 * 0.125)).epsilon(1e-14));

    // One uniform value per y level for h1, per x position for h2.
    for (int j = 0; j < 4; ++j) {
        CHECK(u.h1(0, j) == u.h1(4, j));
        CHECK(u.h1(0, j) >= 0.0);
        CHECK(u.h1(0, j) < 1.0);
    }
    for (int i = 0; i < 4; ++i) {
        CHECK(u.h2(i, 0) == u.h2(i, 4));
    }

    // Constant-per-line magnetic fields have exactly zero cell divergence.
    CHECK(divergence_h(spec, u).abs().maxCoeff() == 0.0);
    CHECK(divergence_sum(spec, layout, to_vector(layout, u)) == 0.0);

    const FieldState same = initial_condition(spec, layout, 5);
    CHECK((same.h1 - u.h1).abs().maxCoeff() == 0.0);
    const FieldState other = initial_condition(spec, layout, 6);
    CHECK((other.h1 - u.h1).abs().maxCoeff() > 0.0);

    const GridLayout wrong = build_layout(GridSpec(5, 1.0, 1.0));
    CHECK_THROWS_AS(initial_condition(spec, wrong, 5), std::invalid_argument);
}

TEST_CASE("divergence sum over a linear field") {
    const GridSpec spec(4, 1.0, 1.0);
    const GridLayout layout = build_layout(spec);
    FieldState u = FieldState::zero(spec);
    for (int j = 0; j < 4; ++j) {
        for (int i = 0; i <= 4; ++i) {
            u.h1(i, j) = i * spec.dx;  // divergence 1 in each of the 16 cells
        }
    }
    const Eigen::VectorXd v = to_vector(layout, u);
    CHECK(divergence_sum(spec, layout, v) == doctest::Approx(16.0).epsilon(1e-14));
    CHECK(divergence_sum(spec, layout, v) ==
          doctest::Approx(divergence_h(spec, u).sum()).epsilon(1e-13));

    Eigen::VectorXd wrong(layout.dim + 1);
    wrong.setZero();
    CHECK_THROWS_AS(divergence_sum(spec, layout, wrong), std::invalid_argument);
}

TEST_CASE("strong convergence smoke run") {
    const ConvergenceConfig cfg = small_convergence();
    const ConvergenceReport report = run_strong_convergence(cfg);

    CHECK(report.scheme == SchemeKind::SEXP);
    CHECK(report.samples_total == 8);
    REQUIRE(report.levels.size() == 2);
    CHECK(report.levels[0].dt == 1.0 / 8.0);  // descending step sizes
    CHECK(report.levels[1].dt == 1.0 / 16.0);
    for (const auto& lvl : report.levels) {
        CHECK(lvl.samples_used == 8);
        CHECK(lvl.samples_excluded == 0);
        CHECK(lvl.rms_error > 0.0);
        CHECK(lvl.stderr_error > 0.0);
    }
    // The coarser level carries the larger error.
    CHECK(report.levels[0].rms_error > report.levels[1].rms_error);
    CHECK(std::isfinite(report.slope));
    CHECK(std::isfinite(report.intercept));
}

TEST_CASE("strong convergence is deterministic and thread independent") {
    // More samples than one worker block holds, so the threaded run really
    // distributes work and the fixed-order reduction is what keeps the
    // numbers identical.
    ConvergenceConfig cfg = small_convergence();
    cfg.samples = 24;
    const ConvergenceReport a = run_strong_convergence(cfg);
    const ConvergenceReport b = run_strong_convergence(cfg);

    ConvergenceConfig threaded = cfg;
    threaded.threads = 3;
    const ConvergenceReport c = run_strong_convergence(threaded);

    for (const auto* other : {&b, &c}) {
        CHECK(a.slope == other->slope);
        for (std::size_t l = 0; l < a.levels.size(); ++l) {
            CHECK(a.levels[l].rms_error == other->levels[l].rms_error);
            CHECK(a.levels[l].stderr_error == other->levels[l].stderr_error);
        }
    }
}

TEST_CASE("max over steps dominates the final time error") {
    ConvergenceConfig cfg = small_convergence();
    const ConvergenceReport fin = run_strong_convergence(cfg);
    cfg.metric = ErrorMetric::MaxOverSteps;
    const ConvergenceReport max = run_strong_convergence(cfg);
    REQUIRE(fin.levels.size() == max.levels.size());
    for (std::size_t l = 0; l < fin.levels.size(); ++l) {
        CHECK(max.levels[l].rms_error >= fin.levels[l].rms_error * (1.0 - 1e-12));
    }
}

TEST_CASE("exponential scheme is exact for the bare field") {
    // Without drift or noise the exponential integrator reproduces the flow
    // at any step size, so every level's error is rounding noise.
    ConvergenceConfig cfg = small_convergence();
    cfg.grid = GridSpec(8, 1.0, 1.0);
    cfg.model.drift = DriftKind::Zero;
    cfg.model.lambda_e = 0.0;
    cfg.model.lambda_h = 0.0;
    cfg.samples = 2;
    const ConvergenceReport report = run_strong_convergence(cfg);
    for (const auto& lvl : report.levels) {
        CHECK(lvl.rms_error < 1e-11);
    }
}

TEST_CASE("trace smoke run") {
    const TraceConfig cfg = small_trace();
    const TraceReport report = run_trace_formula(cfg);

    REQUIRE(report.times.size() == 5);
    CHECK(report.times.front() == 0.0);
    CHECK(report.times.back() == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(report.k_h > 0.0);

    const GridLayout layout = build_layout(cfg.grid);
    const FieldState u0 = initial_condition(cfg.grid, layout, cfg.master_seed);
    CHECK(report.initial_energy == doctest::Approx(energy(cfg.grid, u0)).epsilon(1e-14));

    REQUIRE(report.theory_energy.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(report.theory_energy[k] ==
              doctest::Approx(report.initial_energy + report.k_h * report.times[k])
                  .epsilon(1e-13));
    }

    REQUIRE(report.series.size() == 3);
    std::set<SchemeKind> seen;
    for (const auto& s : report.series) {
        seen.insert(s.scheme);
        CHECK(s.samples_used == 8);
        CHECK(s.samples_excluded == 0);
        REQUIRE(s.mean_energy.size() == 5);
        REQUIRE(s.stderr_energy.size() == 5);
        // All samples share the initial state, so the first point is exact.
        CHECK(s.mean_energy[0] ==
              doctest::Approx(report.initial_energy).epsilon(1e-13));
        CHECK(s.stderr_energy[0] == 0.0);
        CHECK(s.final_mean_energy == s.mean_energy.back());
        CHECK(std::isfinite(s.fitted_slope));
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("divergence smoke run") {
    // Without noise all schemes transport the fields deterministically and
    // the summed divergence stays at its initial zero to rounding accuracy.
    TraceConfig cfg = small_trace();
    cfg.model.lambda_e = 0.0;
    cfg.model.lambda_h = 0.0;
    cfg.samples = 2;
    const DivergenceReport report = run_divergence(cfg);

    CHECK(report.initial_div_sum == 0.0);
    REQUIRE(report.series.size() == 3);
    for (const auto& s : report.series) {
        REQUIRE(s.mean_div_sum.size() == 5);
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(std::abs(s.mean_div_sum[k]) < 1e-12);
            CHECK(s.max_abs_div[k] < 1e-12);
            CHECK(s.stderr_div_sum[k] < 1e-12);
        }
    }
}

TEST_CASE("divergence is preserved per sample even with active noise") {
    // The summed divergence of a noise increment telescopes to zero because
    // the basis vanishes on the boundary, and the propagator maps the cell
    // divergence invariantly, so each noisy sample stays at rounding level.
    TraceConfig cfg = small_trace();
    cfg.schemes = {SchemeKind::SEXP};
    cfg.samples = 16;
    const DivergenceReport report = run_divergence(cfg);
    REQUIRE(report.series.size() == 1);
    const DivergenceSeries& s = report.series[0];
    CHECK(s.samples_used == 16);
    for (std::size_t k = 0; k < s.mean_div_sum.size(); ++k) {
        CHECK(s.max_abs_div[k] < 1e-12);
        CHECK(std::abs(s.mean_div_sum[k]) < 1e-12);
    }
}

TEST_CASE("structural check suite passes on a small grid") {
    const GridSpec grid(8, 1.0, 1.0);
    NoiseSpec noise;
    const std::vector<CheckResult> results = run_structural_checks(grid, noise, 12);
    CHECK(results.size() == 10);
    std::set<std::string> names;
    for (const auto& r : results) {
        CAPTURE(r.name);
        CHECK(r.passed);
        CHECK(r.observed <= r.limit);
        names.insert(r.name);
    }
    CHECK(names.size() == results.size());
    CHECK(all_passed(results));

    std::vector<CheckResult> tampered = results;
    tampered[3].passed = false;
    CHECK_FALSE(all_passed(tampered));
}
