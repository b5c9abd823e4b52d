#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stomax/grid.hpp"
#include "stomax/noise.hpp"
#include "stomax/propagator.hpp"
#include "stomax/schemes.hpp"
#include "stomax/stats.hpp"

namespace stomax {

/// Per-sample error reduced over a trajectory: V-norm error at the final
/// time, or the maximum over all coarse step times.
enum class ErrorMetric { FinalTime, MaxOverSteps };

std::string to_string(ErrorMetric m);
ErrorMetric error_metric_from_name(const std::string& name);

/// Spectral truncation controls; max_mode = 0 selects the grid's cell count
/// so the retained modes stop at the mesh Nyquist limit.
struct NoiseSpec {
    int max_mode{0};
    double eta_threshold{0.0};

    int resolved_max_mode(const GridSpec& grid) const;
    void validate() const;
};

struct ConvergenceConfig {
    GridSpec grid{};
    NoiseSpec noise{};
    ModelSpec model{DriftKind::Identity, DiffusionKind::AdditiveConstant, 1.0, 1.0};
    SchemeKind scheme{SchemeKind::SEXP};
    ErrorMetric metric{ErrorMetric::FinalTime};
    double t_final{0.5};
    std::vector<double> dt_levels;  // default 2^-5 .. 2^-9
    double dt_ref{1.0 / 4096.0};
    int samples{100};
    std::uint64_t master_seed{6};
    int threads{1};

    ConvergenceConfig();
    void validate() const;
};

struct TraceConfig {
    GridSpec grid{};
    NoiseSpec noise{};
    ModelSpec model{DriftKind::Zero, DiffusionKind::AdditiveConstant, 0.5, 0.5};
    std::vector<SchemeKind> schemes{SchemeKind::SEXP, SchemeKind::EM,
                                    SchemeKind::SEM};
    double t_final{5.0};
    double dt{0.01};
    int samples{2000};
    std::uint64_t master_seed{6};
    int threads{1};

    void validate() const;
    int step_count() const;
};

struct ConvergenceLevelResult {
    double dt{0.0};
    double rms_error{0.0};
    double stderr_error{0.0};
    long long samples_used{0};
    long long samples_excluded{0};
};

struct ConvergenceReport {
    SchemeKind scheme{SchemeKind::SEXP};
    ErrorMetric metric{ErrorMetric::FinalTime};
    std::vector<ConvergenceLevelResult> levels;  // descending dt
    double slope{std::numeric_limits<double>::quiet_NaN()};
    double intercept{std::numeric_limits<double>::quiet_NaN()};
    long long samples_total{0};
};

struct EnergySeries {
    SchemeKind scheme{SchemeKind::SEXP};
    std::vector<double> mean_energy;
    std::vector<double> stderr_energy;
    double fitted_slope{0.0};
    double final_mean_energy{0.0};
    long long samples_used{0};
    long long samples_excluded{0};
};

struct TraceReport {
    std::vector<double> times;
    std::vector<double> theory_energy;  // initial_energy + k_h * t
    double k_h{0.0};
    double initial_energy{0.0};
    std::vector<EnergySeries> series;
};

struct DivergenceSeries {
    SchemeKind scheme{SchemeKind::SEXP};
    std::vector<double> mean_div_sum;
    std::vector<double> stderr_div_sum;
    std::vector<double> max_abs_div;  // worst sample magnitude per step
    long long samples_used{0};
    long long samples_excluded{0};
};

struct DivergenceReport {
    std::vector<double> times;
    double initial_div_sum{0.0};
    std::vector<DivergenceSeries> series;
};

/**
 * @brief Exact mean-energy drift rate of the additive-noise injection.
 *
 * K_h = sum_m eta_m dx dy [eps lambda_e^2 sum_{e3 pts} e_m^2
 *       + mu lambda_h^2 (sum_{h1 pts} e_m^2 + sum_{h2 pts} e_m^2)],
 * which equals E[|G dW|_V^2] / dt. Deterministic; no sampling involved.
 * Rejects multiplicative diffusion.
 */
double theoretical_drift_rate(const GridSpec& spec, const SpectralNoise& noise,
                              const ModelSpec& model);

/**
 * @brief The shared initial state of every Monte Carlo sample in a run.
 *
 * E3 is a centered Gaussian bump 0.1 exp(-50 r^2) with boundary nodes
 * zeroed; H1 is constant along x with one uniform(0,1) value per y level,
 * H2 constant along y with one value per x level, both drawn from the master
 * seed. The construction makes the initial cell divergence exactly zero.
 */
FieldState initial_condition(const GridSpec& spec, const GridLayout& layout,
                             std::uint64_t master_seed);

/// Spatial sum of the cell-centered divergence of the magnetic part of a
/// stacked state vector, accumulated in extended precision.
double divergence_sum(const GridSpec& spec, const GridLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state);

/**
 * @brief Strong-error study against a reference trajectory on a shared path.
 *
 * Every sample simulates the reference with the exponential scheme at dt_ref
 * and then each coarse level with cfg.scheme on the same Brownian path;
 * coarse increments are exact sums of the fine ones. Reported errors are
 * RMS over samples of the per-sample V-norm error.
 */
ConvergenceReport run_strong_convergence(const ConvergenceConfig& cfg);

/// Mean-energy trajectories per scheme against the exact affine theory line.
TraceReport run_trace_formula(const TraceConfig& cfg);

/// Mean summed divergence trajectories per scheme.
DivergenceReport run_divergence(const TraceConfig& cfg);

struct CheckResult {
    std::string name;
    bool passed{false};
    double observed{0.0};
    double limit{0.0};
};

/**
 * @brief Structural invariant suite behind the `check` subcommand.
 *
 * Covers operator skew-adjointness, sparse/stencil agreement, propagator
 * isometry and group composition, spectrum location, divergence of curls,
 * Brownian refinement exactness, Taylor consistency of the exponential, and
 * the same-noise difference isometry of the exponential scheme.
 */
std::vector<CheckResult> run_structural_checks(const GridSpec& grid,
                                               const NoiseSpec& noise,
                                               std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace stomax
