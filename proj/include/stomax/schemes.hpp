#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "stomax/grid.hpp"
#include "stomax/noise.hpp"
#include "stomax/propagator.hpp"

namespace stomax {

enum class SchemeKind { SEXP, EM, SEM };
enum class DriftKind { Zero, Identity, IdentityPlusCos };
enum class DiffusionKind { AdditiveConstant, SineMultiplicative, UnitMultiplicative };

std::string to_string(SchemeKind k);
std::string to_string(DriftKind k);
std::string to_string(DiffusionKind k);

/// Parse the names used in config files; throws std::invalid_argument on
/// anything else.
SchemeKind scheme_from_name(const std::string& name);
DriftKind drift_from_name(const std::string& name);
DiffusionKind diffusion_from_name(const std::string& name);

/**
 * @brief Drift and diffusion selection with additive amplitudes.
 *
 * Both nonlinearities act pointwise per DOF. additive_constant scales the
 * Wiener increment by lambda_e on the electric family and lambda_h on both
 * magnetic families and ignores the state.
 */
struct ModelSpec {
    DriftKind drift{DriftKind::Zero};
    DiffusionKind diffusion{DiffusionKind::AdditiveConstant};
    double lambda_e{0.5};
    double lambda_h{0.5};

    void validate() const;
};

/// Pointwise drift F(u); boundary e3 entries of the result are zeroed.
FieldState apply_drift(const ModelSpec& model, const FieldState& u);

/// Pointwise diffusion G(u) applied to the increment arrays.
FieldState apply_diffusion(const ModelSpec& model, const FieldState& u,
                           const FieldIncrements& dw);

/// One exponential-integrator step: S(dt) (u + dt F(u) + G(u) dW), with S
/// applied once to the assembled sum.
FieldState sexp_step(const MaxwellMatrix& m, const PropagatorCache& prop,
                     const ModelSpec& model, const FieldState& u,
                     const FieldIncrements& dw);

/// One explicit Euler step: u + dt A u + dt F(u) + G(u) dW.
FieldState em_step(const MaxwellMatrix& m, double dt, const ModelSpec& model,
                   const FieldState& u, const FieldIncrements& dw);

/// One semi-implicit Euler step: solve (I - dt A) u1 = u + dt F(u) + G(u) dW.
FieldState sem_step(const MaxwellMatrix& m, const SemSolveCache& solver,
                    const ModelSpec& model, const FieldState& u,
                    const FieldIncrements& dw);

/**
 * @brief Caches needed by integrate; only the members a scheme uses must be
 * set (propagator for SEXP, solver for SEM, matrix and dt always).
 */
struct SchemeCaches {
    const MaxwellMatrix* matrix{nullptr};
    const PropagatorCache* propagator{nullptr};
    const SemSolveCache* solver{nullptr};
    double dt{0.0};
};

struct TrajectorySummary {
    FieldState final_state;
    double max_vnorm{0.0};
    bool finite{true};
    int steps_done{0};
};

/// Called with step index k and the state at time k*dt; k = 0 is the initial
/// state.
using StepObserver = std::function<void(int, const FieldState&)>;

/**
 * @brief Drive one trajectory for n_steps coarse steps.
 *
 * Each coarse increment spans `factor` fine columns of the path. Stepping
 * stops early only when the state turns non-finite; the summary then carries
 * finite = false and the number of completed steps.
 */
TrajectorySummary integrate(SchemeKind scheme, const SchemeCaches& caches,
                            const ModelSpec& model, const FieldState& u0,
                            const SpectralNoise& noise, const BrownianPath& path,
                            int factor, int n_steps,
                            const StepObserver& observer = {});

// Block kernels for the Monte Carlo runners. States and increments are
// matrices of stacked layout vectors, one column per sample.

/// rhs += dt * F(states), columnwise pointwise, boundary e3 rows excluded.
void accumulate_drift(const GridLayout& layout, const ModelSpec& model,
                      double dt, const Eigen::MatrixXd& states,
                      Eigen::MatrixXd& rhs);

/// rhs += G(states) applied to spatialized increments, columnwise pointwise.
void accumulate_diffusion(const GridLayout& layout, const ModelSpec& model,
                          const Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& increments,
                          Eigen::MatrixXd& rhs);

/// Force boundary e3 rows of every column to zero.
void zero_boundary_e3_rows(const GridLayout& layout, Eigen::MatrixXd& states);

}  // namespace stomax
