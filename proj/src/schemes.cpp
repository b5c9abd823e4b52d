#include "stomax/schemes.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace stomax {

namespace {

void check_increment_shapes(const FieldState& u, const FieldIncrements& dw) {
    const bool ok = u.e3.rows() == dw.e3.rows() && u.e3.cols() == dw.e3.cols() &&
                    u.h1.rows() == dw.h1.rows() && u.h1.cols() == dw.h1.cols() &&
                    u.h2.rows() == dw.h2.rows() && u.h2.cols() == dw.h2.cols();
    if (!ok) {
        throw std::invalid_argument("increment arrays do not match the state shapes");
    }
}

std::vector<int> boundary_e3_rows(const GridLayout& layout) {
    const int n = layout.n;
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(4 * n));
    for (int i = 0; i <= n; ++i) {
        rows.push_back(layout.e3_index(i, 0));
        rows.push_back(layout.e3_index(i, n));
    }
    for (int j = 1; j < n; ++j) {
        rows.push_back(layout.e3_index(0, j));
        rows.push_back(layout.e3_index(n, j));
    }
    return rows;
}

FieldState step_rhs(double dt, const ModelSpec& model, const FieldState& u,
                    const FieldIncrements& dw) {
    FieldState drift = apply_drift(model, u);
    FieldState diff = apply_diffusion(model, u, dw);
    FieldState rhs;
    rhs.e3 = u.e3 + dt * drift.e3 + diff.e3;
    rhs.h1 = u.h1 + dt * drift.h1 + diff.h1;
    rhs.h2 = u.h2 + dt * drift.h2 + diff.h2;
    enforce_pec(rhs);
    return rhs;
}

}  // namespace

std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::SEXP: return "sexp";
        case SchemeKind::EM: return "em";
        case SchemeKind::SEM: return "sem";
    }
    throw std::invalid_argument("unknown scheme kind");
}

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::Zero: return "zero";
        case DriftKind::Identity: return "identity";
        case DriftKind::IdentityPlusCos: return "identity_plus_cos";
    }
    throw std::invalid_argument("unknown drift kind");
}

std::string to_string(DiffusionKind k) {
    switch (k) {
        case DiffusionKind::AdditiveConstant: return "additive_constant";
        case DiffusionKind::SineMultiplicative: return "sine_multiplicative";
        case DiffusionKind::UnitMultiplicative: return "unit_multiplicative";
    }
    throw std::invalid_argument("unknown diffusion kind");
}

SchemeKind scheme_from_name(const std::string& name) {
    if (name == "sexp") return SchemeKind::SEXP;
    if (name == "em") return SchemeKind::EM;
    if (name == "sem") return SchemeKind::SEM;
    throw std::invalid_argument("unknown scheme '" + name +
                                "' (expected sexp, em, or sem)");
}

DriftKind drift_from_name(const std::string& name) {
    if (name == "zero") return DriftKind::Zero;
    if (name == "identity") return DriftKind::Identity;
    if (name == "identity_plus_cos") return DriftKind::IdentityPlusCos;
    throw std::invalid_argument(
        "unknown drift '" + name +
        "' (expected zero, identity, or identity_plus_cos)");
}

DiffusionKind diffusion_from_name(const std::string& name) {
    if (name == "additive_constant") return DiffusionKind::AdditiveConstant;
    if (name == "sine_multiplicative") return DiffusionKind::SineMultiplicative;
    if (name == "unit_multiplicative") return DiffusionKind::UnitMultiplicative;
    throw std::invalid_argument(
        "unknown diffusion '" + name +
        "' (expected additive_constant, sine_multiplicative, or unit_multiplicative)");
}

void ModelSpec::validate() const {
    if (!std::isfinite(lambda_e) || !std::isfinite(lambda_h)) {
        throw std::invalid_argument("model amplitudes must be finite");
    }
}

FieldState apply_drift(const ModelSpec& model, const FieldState& u) {
    FieldState out;
    switch (model.drift) {
        case DriftKind::Zero:
            out.e3 = Eigen::ArrayXXd::Zero(u.e3.rows(), u.e3.cols());
            out.h1 = Eigen::ArrayXXd::Zero(u.h1.rows(), u.h1.cols());
            out.h2 = Eigen::ArrayXXd::Zero(u.h2.rows(), u.h2.cols());
            return out;
        case DriftKind::Identity:
            out = u;
            break;
        case DriftKind::IdentityPlusCos:
            out.e3 = u.e3 + u.e3.cos();
            out.h1 = u.h1 + u.h1.cos();
            out.h2 = u.h2 + u.h2.cos();
            break;
    }
    enforce_pec(out);
    return out;
}

FieldState apply_diffusion(const ModelSpec& model, const FieldState& u,
                           const FieldIncrements& dw) {
    check_increment_shapes(u, dw);
    FieldState out;
    switch (model.diffusion) {
        case DiffusionKind::AdditiveConstant:
            out.e3 = model.lambda_e * dw.e3;
            out.h1 = model.lambda_h * dw.h1;
            out.h2 = model.lambda_h * dw.h2;
            break;
        case DiffusionKind::SineMultiplicative:
            out.e3 = u.e3.sin() * dw.e3;
            out.h1 = u.h1.sin() * dw.h1;
            out.h2 = u.h2.sin() * dw.h2;
            break;
        case DiffusionKind::UnitMultiplicative:
            out.e3 = u.e3 * dw.e3;
            out.h1 = u.h1 * dw.h1;
            out.h2 = u.h2 * dw.h2;
            break;
    }
    enforce_pec(out);
    return out;
}

FieldState sexp_step(const MaxwellMatrix& m, const PropagatorCache& prop,
                     const ModelSpec& model, const FieldState& u,
                     const FieldIncrements& dw) {
    if (prop.dim() != m.layout.dim) {
        throw std::invalid_argument("sexp_step: propagator built for a different grid");
    }
    const FieldState rhs = step_rhs(prop.dt(), model, u, dw);
    FieldState out = prop.apply(m.spec, m.layout, rhs);
    enforce_pec(out);
    return out;
}

FieldState em_step(const MaxwellMatrix& m, double dt, const ModelSpec& model,
                   const FieldState& u, const FieldIncrements& dw) {
    const Eigen::VectorXd au = m.action * to_vector(m.layout, u);
    FieldState out = step_rhs(dt, model, u, dw);
    const FieldState a = from_vector(m.spec, m.layout, au);
    out.e3 += dt * a.e3;
    out.h1 += dt * a.h1;
    out.h2 += dt * a.h2;
    enforce_pec(out);
    return out;
}

FieldState sem_step(const MaxwellMatrix& m, const SemSolveCache& solver,
                    const ModelSpec& model, const FieldState& u,
                    const FieldIncrements& dw) {
    if (solver.dim() != m.layout.dim) {
        throw std::invalid_argument("sem_step: solver built for a different grid");
    }
    const FieldState rhs = step_rhs(solver.dt(), model, u, dw);
    FieldState out =
        from_vector(m.spec, m.layout, solver.solve(to_vector(m.layout, rhs)));
    enforce_pec(out);
    return out;
}

TrajectorySummary integrate(SchemeKind scheme, const SchemeCaches& caches,
                            const ModelSpec& model, const FieldState& u0,
                            const SpectralNoise& noise, const BrownianPath& path,
                            int factor, int n_steps,
                            const StepObserver& observer) {
    if (caches.matrix == nullptr) {
        throw std::invalid_argument("integrate: caches.matrix is required");
    }
    if (scheme == SchemeKind::SEXP) {
        if (caches.propagator == nullptr) {
            throw std::invalid_argument("integrate: SEXP requires a propagator cache");
        }
        if (caches.propagator->dt() != caches.dt) {
            throw std::invalid_argument("integrate: propagator cached for a different step");
        }
    }
    if (scheme == SchemeKind::SEM) {
        if (caches.solver == nullptr) {
            throw std::invalid_argument("integrate: SEM requires a solver cache");
        }
        if (caches.solver->dt() != caches.dt) {
            throw std::invalid_argument("integrate: solver cached for a different step");
        }
    }
    if (factor < 1 || n_steps < 0) {
        throw std::invalid_argument("integrate: factor must be >= 1 and n_steps >= 0");
    }
    if (static_cast<long long>(n_steps) * factor > path.n_fine()) {
        throw std::invalid_argument("integrate: path is too short for the requested steps");
    }
    if (path.n_modes() != noise.mode_count()) {
        throw std::invalid_argument("integrate: path mode count does not match the noise");
    }
    model.validate();

    const GridSpec& spec = caches.matrix->spec;
    TrajectorySummary summary;
    summary.final_state = u0;
    enforce_pec(summary.final_state);
    summary.max_vnorm = v_norm(spec, summary.final_state);
    if (observer) observer(0, summary.final_state);

    for (int k = 0; k < n_steps; ++k) {
        const FieldIncrements dw =
            sample_increments(spec, noise, path, factor, k);
        switch (scheme) {
            case SchemeKind::SEXP:
                summary.final_state = sexp_step(*caches.matrix, *caches.propagator,
                                                model, summary.final_state, dw);
                break;
            case SchemeKind::EM:
                summary.final_state = em_step(*caches.matrix, caches.dt, model,
                                              summary.final_state, dw);
                break;
            case SchemeKind::SEM:
                summary.final_state = sem_step(*caches.matrix, *caches.solver,
                                               model, summary.final_state, dw);
                break;
        }
        if (!summary.final_state.all_finite()) {
            summary.finite = false;
            return summary;
        }
        summary.steps_done = k + 1;
        summary.max_vnorm =
            std::max(summary.max_vnorm, v_norm(spec, summary.final_state));
        if (observer) observer(k + 1, summary.final_state);
    }
    return summary;
}

void accumulate_drift(const GridLayout& layout, const ModelSpec& model,
                      double dt, const Eigen::MatrixXd& states,
                      Eigen::MatrixXd& rhs) {
    switch (model.drift) {
        case DriftKind::Zero:
            return;
        case DriftKind::Identity:
            rhs.noalias() += dt * states;
            return;
        case DriftKind::IdentityPlusCos: {
            Eigen::MatrixXd f = states;
            f.array() += states.array().cos();
            for (int row : boundary_e3_rows(layout)) {
                f.row(row).setZero();
            }
            rhs.noalias() += dt * f;
            return;
        }
    }
}

void accumulate_diffusion(const GridLayout& layout, const ModelSpec& model,
                          const Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& increments,
                          Eigen::MatrixXd& rhs) {
    switch (model.diffusion) {
        case DiffusionKind::AdditiveConstant: {
            const int ne = layout.h1_offset();
            const int nh = layout.dim - ne;
            rhs.topRows(ne).noalias() += model.lambda_e * increments.topRows(ne);
            rhs.bottomRows(nh).noalias() += model.lambda_h * increments.bottomRows(nh);
            return;
        }
        case DiffusionKind::SineMultiplicative:
            rhs.array() += states.array().sin() * increments.array();
            return;
        case DiffusionKind::UnitMultiplicative:
            rhs.array() += states.array() * increments.array();
            return;
    }
}

void zero_boundary_e3_rows(const GridLayout& layout, Eigen::MatrixXd& states) {
    for (int row : boundary_e3_rows(layout)) {
        states.row(row).setZero();
    }
}

}  // namespace stomax
