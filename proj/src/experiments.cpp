#include "stomax/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include <Eigen/Eigenvalues>

#include "stomax/parallel.hpp"
#include "stomax/rng.hpp"

namespace stomax {

namespace {

constexpr int kConvergenceBlock = 16;
constexpr int kTraceBlock = 32;

std::string num_str(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// num / den as an exact positive integer, within 1e-9 relative slack.
long long checked_ratio(double num, double den, const std::string& what) {
    const double ratio = num / den;
    const long long r = std::llround(ratio);
    if (r < 1 || std::abs(static_cast<double>(r) * den - num) > 1e-9 * num) {
        throw std::invalid_argument(what + ": " + num_str(den) +
                                    " does not divide " + num_str(num) +
                                    " an integer number of times");
    }
    return r;
}

/// Basis matrices of the three families stacked in layout order, dim x M.
Eigen::MatrixXd stacked_basis(const GridLayout& layout,
                              const SpectralNoise& noise) {
    Eigen::MatrixXd basis(layout.dim, noise.mode_count());
    basis.topRows(noise.basis_e3.rows()) = noise.basis_e3;
    basis.middleRows(noise.basis_e3.rows(), noise.basis_h1.rows()) =
        noise.basis_h1;
    basis.bottomRows(noise.basis_h2.rows()) = noise.basis_h2;
    return basis;
}

double col_vnorm2(const GridSpec& spec, const GridLayout& layout,
                  const Eigen::Ref<const Eigen::VectorXd>& col) {
    const int ne = layout.h1_offset();
    const double e3s = col.head(ne).squaredNorm();
    const double hs = col.tail(layout.dim - ne).squaredNorm();
    return spec.dx * spec.dy * (spec.epsilon * e3s + spec.mu * hs);
}

double col_energy(const GridSpec& spec,
                  const Eigen::Ref<const Eigen::VectorXd>& col) {
    return spec.dx * spec.dy * col.squaredNorm();
}

bool noise_is_active(const ModelSpec& model) {
    if (model.diffusion != DiffusionKind::AdditiveConstant) return true;
    return model.lambda_e != 0.0 || model.lambda_h != 0.0;
}

/// Shared per-step context of a block integrator.
struct StepCtx {
    const GridSpec* spec{nullptr};
    const GridLayout* layout{nullptr};
    const Eigen::SparseMatrix<double>* action{nullptr};
    SchemeKind scheme{SchemeKind::SEXP};
    const PropagatorCache* prop{nullptr};
    const SemSolveCache* solver{nullptr};
    double dt{0.0};
    const ModelSpec* model{nullptr};
};

/// Evaluate one coarse Wiener increment for every sample column.
void make_spatial(const std::vector<BrownianPath>& paths, int factor, int step,
                  const Eigen::VectorXd& sqrt_eta,
                  const Eigen::MatrixXd& basis_all, Eigen::MatrixXd& xi,
                  Eigen::MatrixXd& spatial) {
    for (std::size_t b = 0; b < paths.size(); ++b) {
        xi.col(static_cast<Eigen::Index>(b)) =
            paths[b].coarse_increment(factor, step);
    }
    xi.array().colwise() *= sqrt_eta.array();
    spatial.noalias() = basis_all * xi;
}

/**
 * One scheme step on a block of sample columns. `spatial` may be null for
 * noise-free models. Columns that turn non-finite are zeroed and their ok
 * flag cleared; they keep flowing through the block algebra but their
 * outputs are never read again.
 */
void apply_scheme_step(const StepCtx& c, const Eigen::MatrixXd* spatial,
                       Eigen::MatrixXd& states, Eigen::MatrixXd& next,
                       Eigen::MatrixXd& rhs, std::vector<char>& ok) {
    rhs = states;
    accumulate_drift(*c.layout, *c.model, c.dt, states, rhs);
    if (spatial != nullptr) {
        accumulate_diffusion(*c.layout, *c.model, states, *spatial, rhs);
    }
    zero_boundary_e3_rows(*c.layout, rhs);
    switch (c.scheme) {
        case SchemeKind::SEXP:
            next.noalias() = c.prop->matrix() * rhs;
            break;
        case SchemeKind::EM:
            next = rhs;
            next.noalias() += c.dt * ((*c.action) * states);
            break;
        case SchemeKind::SEM:
            next = c.solver->solve_block(rhs);
            break;
    }
    zero_boundary_e3_rows(*c.layout, next);
    states.swap(next);
    for (Eigen::Index b = 0; b < states.cols(); ++b) {
        if (ok[static_cast<std::size_t>(b)] && !states.col(b).allFinite()) {
            ok[static_cast<std::size_t>(b)] = 0;
            states.col(b).setZero();
        }
    }
}

FieldState normalized_v(const GridSpec& spec, FieldState u) {
    const double norm = v_norm(spec, u);
    if (norm == 0.0) {
        throw std::runtime_error("cannot normalize a zero state");
    }
    u.e3 /= norm;
    u.h1 /= norm;
    u.h2 /= norm;
    return u;
}

FieldState random_state(const GridSpec& spec, const GridLayout& layout,
                        std::uint64_t seed, std::uint32_t index, double scale) {
    FieldState u = FieldState::zero(spec);
    std::uint32_t q = 0;
    auto fill = [&](Eigen::ArrayXXd& a) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            for (Eigen::Index r = 0; r < a.rows(); ++r) {
                a(r, c) = scale * normal_draw(seed, index, q++, 0,
                                              RngPurpose::TestState);
            }
        }
    };
    fill(u.e3);
    fill(u.h1);
    fill(u.h2);
    (void)layout;
    enforce_pec(u);
    return u;
}

FieldState state_difference(const FieldState& a, const FieldState& b) {
    FieldState d;
    d.e3 = a.e3 - b.e3;
    d.h1 = a.h1 - b.h1;
    d.h2 = a.h2 - b.h2;
    return d;
}

}  // namespace

std::string to_string(ErrorMetric m) {
    switch (m) {
        case ErrorMetric::FinalTime: return "final_time";
        case ErrorMetric::MaxOverSteps: return "max_over_steps";
    }
    throw std::invalid_argument("unknown error metric");
}

ErrorMetric error_metric_from_name(const std::string& name) {
    if (name == "final_time") return ErrorMetric::FinalTime;
    if (name == "max_over_steps") return ErrorMetric::MaxOverSteps;
    throw std::invalid_argument("unknown error metric '" + name +
                                "' (expected final_time or max_over_steps)");
}

int NoiseSpec::resolved_max_mode(const GridSpec& grid) const {
    return max_mode > 0 ? max_mode : grid.n_cells;
}

void NoiseSpec::validate() const {
    if (max_mode < 0) {
        throw std::invalid_argument("noise.max_mode must be >= 0 (0 selects the grid size)");
    }
    if (!std::isfinite(eta_threshold) || eta_threshold < 0.0) {
        throw std::invalid_argument("noise.eta_threshold must be finite and >= 0");
    }
}

ConvergenceConfig::ConvergenceConfig()
    : dt_levels{1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0} {}

void ConvergenceConfig::validate() const {
    grid.validate();
    noise.validate();
    model.validate();
    if (!std::isfinite(t_final) || t_final <= 0.0) {
        throw std::invalid_argument("convergence.t_final must be positive");
    }
    if (dt_levels.empty()) {
        throw std::invalid_argument("convergence.dt_levels must not be empty");
    }
    double min_level = dt_levels.front();
    for (double dt : dt_levels) {
        if (!std::isfinite(dt) || dt <= 0.0) {
            throw std::invalid_argument("convergence.dt_levels entries must be positive");
        }
        min_level = std::min(min_level, dt);
    }
    std::vector<double> sorted = dt_levels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("convergence.dt_levels contains a duplicate entry");
    }
    if (!std::isfinite(dt_ref) || dt_ref <= 0.0) {
        throw std::invalid_argument("convergence.dt_ref must be positive");
    }
    if (dt_ref >= min_level) {
        throw std::invalid_argument(
            "convergence.dt_ref " + num_str(dt_ref) +
            " must be strictly smaller than the smallest dt level " +
            num_str(min_level));
    }
    for (double dt : dt_levels) {
        checked_ratio(dt, dt_ref, "convergence.dt_ref vs dt level");
        checked_ratio(t_final, dt, "convergence.t_final vs dt level");
    }
    checked_ratio(t_final, dt_ref, "convergence.t_final vs dt_ref");
    if (samples < 2) {
        throw std::invalid_argument("convergence.samples must be at least 2");
    }
    if (threads < 1) {
        throw std::invalid_argument("threads must be at least 1");
    }
}

void TraceConfig::validate() const {
    grid.validate();
    noise.validate();
    model.validate();
    if (!std::isfinite(dt) || dt <= 0.0) {
        throw std::invalid_argument("trace.dt must be positive");
    }
    if (!std::isfinite(t_final) || t_final < dt) {
        throw std::invalid_argument("trace.t_final must be at least one step");
    }
    checked_ratio(t_final, dt, "trace.t_final vs trace.dt");
    if (samples < 2) {
        throw std::invalid_argument("trace.samples must be at least 2");
    }
    if (schemes.empty()) {
        throw std::invalid_argument("trace.schemes must not be empty");
    }
    for (std::size_t i = 0; i < schemes.size(); ++i) {
        for (std::size_t j = i + 1; j < schemes.size(); ++j) {
            if (schemes[i] == schemes[j]) {
                throw std::invalid_argument("trace.schemes lists '" +
                                            to_string(schemes[i]) + "' twice");
            }
        }
    }
    if (model.diffusion != DiffusionKind::AdditiveConstant) {
        throw std::invalid_argument(
            "trace and divergence runs require additive_constant diffusion");
    }
    if (model.drift != DriftKind::Zero) {
        throw std::invalid_argument(
            "trace and divergence runs require zero drift; the affine "
            "mean-energy law does not hold otherwise");
    }
    if (grid.epsilon != 1.0 || grid.mu != 1.0) {
        throw std::invalid_argument(
            "trace and divergence runs require epsilon = mu = 1 so the "
            "reported energy matches the norm tracked by the theory line");
    }
    if (threads < 1) {
        throw std::invalid_argument("threads must be at least 1");
    }
}

int TraceConfig::step_count() const {
    return static_cast<int>(checked_ratio(t_final, dt, "trace.t_final vs trace.dt"));
}

double theoretical_drift_rate(const GridSpec& spec, const SpectralNoise& noise,
                              const ModelSpec& model) {
    spec.validate();
    model.validate();
    if (model.diffusion != DiffusionKind::AdditiveConstant) {
        throw std::invalid_argument(
            "theoretical_drift_rate: defined for additive_constant diffusion only");
    }
    const double cell = spec.dx * spec.dy;
    const double le2 = model.lambda_e * model.lambda_e;
    const double lh2 = model.lambda_h * model.lambda_h;
    double rate = 0.0;
    for (int m = 0; m < noise.mode_count(); ++m) {
        const double e3s = noise.basis_e3.col(m).squaredNorm();
        const double h1s = noise.basis_h1.col(m).squaredNorm();
        const double h2s = noise.basis_h2.col(m).squaredNorm();
        rate += noise.modes[static_cast<std::size_t>(m)].eta * cell *
                (spec.epsilon * le2 * e3s + spec.mu * lh2 * (h1s + h2s));
    }
    return rate;
}

FieldState initial_condition(const GridSpec& spec, const GridLayout& layout,
                             std::uint64_t master_seed) {
    spec.validate();
    if (layout.n != spec.n_cells) {
        throw std::invalid_argument("initial_condition: layout does not match the grid");
    }
    const int n = spec.n_cells;
    FieldState u = FieldState::zero(spec);
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            const GridLayout::Point& p =
                layout.e3_points[static_cast<std::size_t>(layout.e3_index(i, j))];
            const double r2 = (p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5);
            u.e3(i, j) = 0.1 * std::exp(-50.0 * r2);
        }
    }
    enforce_pec(u);
    for (int j = 0; j < n; ++j) {
        u.h1.col(j).setConstant(
            uniform_draw(master_seed, static_cast<std::uint32_t>(j),
                         RngPurpose::InitialH1));
    }
    for (int i = 0; i < n; ++i) {
        u.h2.row(i).setConstant(
            uniform_draw(master_seed, static_cast<std::uint32_t>(i),
                         RngPurpose::InitialH2));
    }
    return u;
}

double divergence_sum(const GridSpec& spec, const GridLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state) {
    if (state.size() != layout.dim) {
        throw std::invalid_argument("divergence_sum: state size mismatch");
    }
    const int n = layout.n;
    const double* h1 = state.data() + layout.h1_offset();
    const double* h2 = state.data() + layout.h2_offset();
    // Extended-precision accumulation keeps the telescoping cancellation of
    // the cell sum from being drowned by summation rounding.
    long double acc = 0.0L;
    const long double dx = spec.dx;
    const long double dy = spec.dy;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const long double ax = static_cast<long double>(h1[j * (n + 1) + i + 1]) -
                                   static_cast<long double>(h1[j * (n + 1) + i]);
            const long double ay = static_cast<long double>(h2[(j + 1) * n + i]) -
                                   static_cast<long double>(h2[j * n + i]);
            acc += ax / dx + ay / dy;
        }
    }
    return static_cast<double>(acc);
}

ConvergenceReport run_strong_convergence(const ConvergenceConfig& cfg) {
    cfg.validate();
    const GridLayout layout = build_layout(cfg.grid);
    const SpectralNoise noise = SpectralNoise::build(
        layout, cfg.noise.resolved_max_mode(cfg.grid), cfg.noise.eta_threshold);
    const MaxwellMatrix m = assemble(cfg.grid, layout);
    const FieldState u0 = initial_condition(cfg.grid, layout, cfg.master_seed);
    const Eigen::VectorXd u0_vec = to_vector(layout, u0);
    const Eigen::MatrixXd basis_all = stacked_basis(layout, noise);
    const bool active = noise_is_active(cfg.model);

    std::vector<double> levels = cfg.dt_levels;
    std::sort(levels.begin(), levels.end(), std::greater<double>());
    const int n_levels = static_cast<int>(levels.size());
    const int n_fine =
        static_cast<int>(checked_ratio(cfg.t_final, cfg.dt_ref, "convergence"));
    std::vector<int> factors(levels.size());
    std::vector<int> level_steps(levels.size());
    int f_min = 0;
    for (int l = 0; l < n_levels; ++l) {
        factors[l] = static_cast<int>(
            checked_ratio(levels[l], cfg.dt_ref, "convergence"));
        level_steps[l] = static_cast<int>(
            checked_ratio(cfg.t_final, levels[l], "convergence"));
        f_min = f_min == 0 ? factors[l] : std::min(f_min, factors[l]);
    }

    const PropagatorCache prop_ref = PropagatorCache::build(m, cfg.dt_ref);
    std::vector<PropagatorCache> props;
    std::vector<SemSolveCache> solvers;
    if (cfg.scheme == SchemeKind::SEXP) {
        props.reserve(levels.size());
        for (double dt : levels) props.push_back(PropagatorCache::build(m, dt));
    } else if (cfg.scheme == SchemeKind::SEM) {
        solvers.reserve(levels.size());
        for (double dt : levels) solvers.push_back(SemSolveCache::build(m, dt));
    }

    const int samples = cfg.samples;
    std::vector<std::vector<double>> err2(
        levels.size(), std::vector<double>(static_cast<std::size_t>(samples), 0.0));
    std::vector<std::vector<char>> excluded(
        levels.size(), std::vector<char>(static_cast<std::size_t>(samples), 0));

    const int n_blocks = (samples + kConvergenceBlock - 1) / kConvergenceBlock;
    const int dim = layout.dim;
    const int n_modes = noise.mode_count();

    auto worker = [&](int block) {
        const int s0 = block * kConvergenceBlock;
        const int nb = std::min(samples, s0 + kConvergenceBlock) - s0;
        std::vector<BrownianPath> paths;
        if (active) {
            paths.reserve(static_cast<std::size_t>(nb));
            for (int b = 0; b < nb; ++b) {
                paths.emplace_back(cfg.master_seed,
                                   static_cast<std::uint32_t>(s0 + b), n_modes,
                                   n_fine, cfg.dt_ref);
            }
        }

        Eigen::MatrixXd states(dim, nb), next(dim, nb), rhs(dim, nb);
        Eigen::MatrixXd xi(n_modes, nb), spatial(dim, nb);

        StepCtx ctx;
        ctx.spec = &cfg.grid;
        ctx.layout = &layout;
        ctx.action = &m.action;
        ctx.model = &cfg.model;

        // Reference trajectory, exponential scheme on the fine grid.
        states = u0_vec.replicate(1, nb);
        std::vector<char> ref_ok(static_cast<std::size_t>(nb), 1);
        ctx.scheme = SchemeKind::SEXP;
        ctx.prop = &prop_ref;
        ctx.solver = nullptr;
        ctx.dt = cfg.dt_ref;
        std::vector<Eigen::MatrixXd> snaps;
        if (cfg.metric == ErrorMetric::MaxOverSteps) {
            snaps.reserve(static_cast<std::size_t>(n_fine / f_min));
        }
        for (int k = 0; k < n_fine; ++k) {
            const Eigen::MatrixXd* sp = nullptr;
            if (active) {
                make_spatial(paths, 1, k, noise.sqrt_eta, basis_all, xi, spatial);
                sp = &spatial;
            }
            apply_scheme_step(ctx, sp, states, next, rhs, ref_ok);
            if (cfg.metric == ErrorMetric::MaxOverSteps && (k + 1) % f_min == 0) {
                snaps.push_back(states);
            }
        }
        const Eigen::MatrixXd ref_final = states;

        for (int l = 0; l < n_levels; ++l) {
            ctx.scheme = cfg.scheme;
            ctx.prop = cfg.scheme == SchemeKind::SEXP
                           ? &props[static_cast<std::size_t>(l)]
                           : nullptr;
            ctx.solver = cfg.scheme == SchemeKind::SEM
                             ? &solvers[static_cast<std::size_t>(l)]
                             : nullptr;
            ctx.dt = levels[static_cast<std::size_t>(l)];

            states = u0_vec.replicate(1, nb);
            std::vector<char> ok = ref_ok;
            for (int b = 0; b < nb; ++b) {
                if (!ok[static_cast<std::size_t>(b)]) states.col(b).setZero();
            }
            std::vector<double> max_err2(static_cast<std::size_t>(nb), 0.0);
            const int factor = factors[static_cast<std::size_t>(l)];
            for (int k = 0; k < level_steps[static_cast<std::size_t>(l)]; ++k) {
                const Eigen::MatrixXd* sp = nullptr;
                if (active) {
                    make_spatial(paths, factor, k, noise.sqrt_eta, basis_all, xi,
                                 spatial);
                    sp = &spatial;
                }
                apply_scheme_step(ctx, sp, states, next, rhs, ok);
                if (cfg.metric == ErrorMetric::MaxOverSteps) {
                    const Eigen::MatrixXd& snap =
                        snaps[static_cast<std::size_t>((k + 1) * factor / f_min - 1)];
                    for (int b = 0; b < nb; ++b) {
                        if (!ok[static_cast<std::size_t>(b)]) continue;
                        const double e2 = col_vnorm2(
                            cfg.grid, layout, states.col(b) - snap.col(b));
                        max_err2[static_cast<std::size_t>(b)] =
                            std::max(max_err2[static_cast<std::size_t>(b)], e2);
                    }
                }
            }
            for (int b = 0; b < nb; ++b) {
                const std::size_t slot = static_cast<std::size_t>(s0 + b);
                if (!ok[static_cast<std::size_t>(b)]) {
                    excluded[static_cast<std::size_t>(l)][slot] = 1;
                    continue;
                }
                double e2 = 0.0;
                if (cfg.metric == ErrorMetric::FinalTime) {
                    e2 = col_vnorm2(cfg.grid, layout,
                                    states.col(b) - ref_final.col(b));
                } else {
                    e2 = max_err2[static_cast<std::size_t>(b)];
                }
                err2[static_cast<std::size_t>(l)][slot] = e2;
            }
        }
    };
    run_blocks(n_blocks, cfg.threads, worker);

    ConvergenceReport report;
    report.scheme = cfg.scheme;
    report.metric = cfg.metric;
    report.samples_total = samples;
    std::vector<double> fit_dt, fit_err;
    bool fit_possible = true;
    for (int l = 0; l < n_levels; ++l) {
        Welford acc;
        long long excl = 0;
        for (int s = 0; s < samples; ++s) {
            if (excluded[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)]) {
                ++excl;
            } else {
                acc.add(err2[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)]);
            }
        }
        if (cfg.scheme != SchemeKind::EM && 2 * excl > samples) {
            throw std::runtime_error(
                "more than half of the samples diverged at dt level " +
                num_str(levels[static_cast<std::size_t>(l)]));
        }
        const RmsEstimate est = rms_from_squares(acc);
        ConvergenceLevelResult lvl;
        lvl.dt = levels[static_cast<std::size_t>(l)];
        lvl.rms_error = est.rms;
        lvl.stderr_error = est.stderr_rms;
        lvl.samples_used = acc.count;
        lvl.samples_excluded = excl;
        report.levels.push_back(lvl);
        if (est.rms > 0.0) {
            fit_dt.push_back(lvl.dt);
            fit_err.push_back(est.rms);
        } else {
            fit_possible = false;
        }
    }
    if (fit_possible && fit_dt.size() >= 2) {
        const LineFit fit = fit_loglog_line(fit_dt, fit_err);
        report.slope = fit.slope;
        report.intercept = fit.intercept;
    }
    return report;
}

namespace {

/// Shared engine of the trace and divergence studies: same schemes, same
/// per-step increments, different per-step observable.
struct TraceRunData {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> observable;  // per scheme, (steps+1) x samples
    std::vector<std::vector<char>> excluded;  // per scheme, per sample
};

TraceRunData run_trace_engine(const TraceConfig& cfg, bool record_divergence,
                              const GridLayout& layout,
                              const SpectralNoise& noise,
                              const MaxwellMatrix& m,
                              const Eigen::VectorXd& u0_vec) {
    const int n_steps = cfg.step_count();
    const bool active = noise_is_active(cfg.model);
    const Eigen::MatrixXd basis_all = stacked_basis(layout, noise);

    const PropagatorCache* prop = nullptr;
    const SemSolveCache* solver = nullptr;
    std::vector<PropagatorCache> prop_store;
    std::vector<SemSolveCache> solver_store;
    for (SchemeKind s : cfg.schemes) {
        if (s == SchemeKind::SEXP && prop == nullptr) {
            prop_store.push_back(PropagatorCache::build(m, cfg.dt));
            prop = &prop_store.back();
        }
        if (s == SchemeKind::SEM && solver == nullptr) {
            solver_store.push_back(SemSolveCache::build(m, cfg.dt));
            solver = &solver_store.back();
        }
    }

    const int samples = cfg.samples;
    const int n_schemes = static_cast<int>(cfg.schemes.size());
    TraceRunData data;
    data.times.resize(static_cast<std::size_t>(n_steps) + 1);
    for (int k = 0; k <= n_steps; ++k) {
        data.times[static_cast<std::size_t>(k)] = static_cast<double>(k) * cfg.dt;
    }
    data.observable.assign(static_cast<std::size_t>(n_schemes),
                           Eigen::MatrixXd::Zero(n_steps + 1, samples));
    data.excluded.assign(static_cast<std::size_t>(n_schemes),
                         std::vector<char>(static_cast<std::size_t>(samples), 0));

    const int dim = layout.dim;
    const int n_modes = noise.mode_count();
    const int n_blocks = (samples + kTraceBlock - 1) / kTraceBlock;

    auto record = [&](int scheme_idx, int step, int sample_base,
                      const Eigen::MatrixXd& states) {
        Eigen::MatrixXd& out = data.observable[static_cast<std::size_t>(scheme_idx)];
        for (Eigen::Index b = 0; b < states.cols(); ++b) {
            const double value =
                record_divergence
                    ? divergence_sum(cfg.grid, layout, states.col(b))
                    : col_energy(cfg.grid, states.col(b));
            out(step, sample_base + static_cast<int>(b)) = value;
        }
    };

    auto worker = [&](int block) {
        const int s0 = block * kTraceBlock;
        const int nb = std::min(samples, s0 + kTraceBlock) - s0;
        std::vector<BrownianPath> paths;
        if (active) {
            paths.reserve(static_cast<std::size_t>(nb));
            for (int b = 0; b < nb; ++b) {
                paths.emplace_back(cfg.master_seed,
                                   static_cast<std::uint32_t>(s0 + b), n_modes,
                                   n_steps, cfg.dt);
            }
        }
        Eigen::MatrixXd xi(n_modes, nb), spatial(dim, nb);
        Eigen::MatrixXd next(dim, nb), rhs(dim, nb);

        std::vector<Eigen::MatrixXd> states(
            static_cast<std::size_t>(n_schemes));
        std::vector<std::vector<char>> ok(
            static_cast<std::size_t>(n_schemes),
            std::vector<char>(static_cast<std::size_t>(nb), 1));
        for (int si = 0; si < n_schemes; ++si) {
            states[static_cast<std::size_t>(si)] = u0_vec.replicate(1, nb);
            record(si, 0, s0, states[static_cast<std::size_t>(si)]);
        }

        StepCtx ctx;
        ctx.spec = &cfg.grid;
        ctx.layout = &layout;
        ctx.action = &m.action;
        ctx.model = &cfg.model;
        ctx.dt = cfg.dt;

        for (int k = 1; k <= n_steps; ++k) {
            const Eigen::MatrixXd* sp = nullptr;
            if (active) {
                make_spatial(paths, 1, k - 1, noise.sqrt_eta, basis_all, xi,
                             spatial);
                sp = &spatial;
            }
            for (int si = 0; si < n_schemes; ++si) {
                ctx.scheme = cfg.schemes[static_cast<std::size_t>(si)];
                ctx.prop = ctx.scheme == SchemeKind::SEXP ? prop : nullptr;
                ctx.solver = ctx.scheme == SchemeKind::SEM ? solver : nullptr;
                apply_scheme_step(ctx, sp, states[static_cast<std::size_t>(si)],
                                  next, rhs, ok[static_cast<std::size_t>(si)]);
                record(si, k, s0, states[static_cast<std::size_t>(si)]);
            }
        }
        for (int si = 0; si < n_schemes; ++si) {
            for (int b = 0; b < nb; ++b) {
                if (!ok[static_cast<std::size_t>(si)][static_cast<std::size_t>(b)]) {
                    data.excluded[static_cast<std::size_t>(si)]
                                 [static_cast<std::size_t>(s0 + b)] = 1;
                }
            }
        }
    };
    run_blocks(n_blocks, cfg.threads, worker);
    return data;
}

void check_exclusions(const TraceConfig& cfg, const TraceRunData& data) {
    for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
        if (cfg.schemes[si] == SchemeKind::EM) continue;
        long long excl = 0;
        for (char c : data.excluded[si]) excl += c;
        if (2 * excl > cfg.samples) {
            throw std::runtime_error("more than half of the samples diverged for scheme " +
                                     to_string(cfg.schemes[si]));
        }
    }
}

}  // namespace

TraceReport run_trace_formula(const TraceConfig& cfg) {
    cfg.validate();
    const GridLayout layout = build_layout(cfg.grid);
    const SpectralNoise noise = SpectralNoise::build(
        layout, cfg.noise.resolved_max_mode(cfg.grid), cfg.noise.eta_threshold);
    const MaxwellMatrix m = assemble(cfg.grid, layout);
    const FieldState u0 = initial_condition(cfg.grid, layout, cfg.master_seed);
    const Eigen::VectorXd u0_vec = to_vector(layout, u0);

    TraceRunData data = run_trace_engine(cfg, false, layout, noise, m, u0_vec);
    check_exclusions(cfg, data);

    TraceReport report;
    report.times = data.times;
    report.k_h = theoretical_drift_rate(cfg.grid, noise, cfg.model);
    report.initial_energy = energy(cfg.grid, u0);
    report.theory_energy.resize(report.times.size());
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        report.theory_energy[k] = report.initial_energy + report.k_h * report.times[k];
    }
    for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
        EnergySeries series;
        series.scheme = cfg.schemes[si];
        const Eigen::MatrixXd& obs = data.observable[si];
        const std::vector<char>& excl = data.excluded[si];
        series.mean_energy.resize(report.times.size());
        series.stderr_energy.resize(report.times.size());
        long long excl_count = 0;
        for (char c : excl) excl_count += c;
        series.samples_excluded = excl_count;
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            Welford acc;
            for (int s = 0; s < cfg.samples; ++s) {
                if (!excl[static_cast<std::size_t>(s)]) {
                    acc.add(obs(static_cast<Eigen::Index>(k), s));
                }
            }
            series.mean_energy[k] = acc.count > 0
                                        ? acc.mean
                                        : std::numeric_limits<double>::quiet_NaN();
            series.stderr_energy[k] = acc.std_error();
            series.samples_used = acc.count;
        }
        series.final_mean_energy = series.mean_energy.back();
        series.fitted_slope = fit_affine_slope(report.times, series.mean_energy);
        report.series.push_back(std::move(series));
    }
    return report;
}

DivergenceReport run_divergence(const TraceConfig& cfg) {
    cfg.validate();
    const GridLayout layout = build_layout(cfg.grid);
    const SpectralNoise noise = SpectralNoise::build(
        layout, cfg.noise.resolved_max_mode(cfg.grid), cfg.noise.eta_threshold);
    const MaxwellMatrix m = assemble(cfg.grid, layout);
    const FieldState u0 = initial_condition(cfg.grid, layout, cfg.master_seed);
    const Eigen::VectorXd u0_vec = to_vector(layout, u0);

    TraceRunData data = run_trace_engine(cfg, true, layout, noise, m, u0_vec);
    check_exclusions(cfg, data);

    DivergenceReport report;
    report.times = data.times;
    report.initial_div_sum = divergence_sum(cfg.grid, layout, u0_vec);
    for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
        DivergenceSeries series;
        series.scheme = cfg.schemes[si];
        const Eigen::MatrixXd& obs = data.observable[si];
        const std::vector<char>& excl = data.excluded[si];
        series.mean_div_sum.resize(report.times.size());
        series.stderr_div_sum.resize(report.times.size());
        series.max_abs_div.resize(report.times.size());
        long long excl_count = 0;
        for (char c : excl) excl_count += c;
        series.samples_excluded = excl_count;
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            Welford acc;
            double max_abs = 0.0;
            for (int s = 0; s < cfg.samples; ++s) {
                if (excl[static_cast<std::size_t>(s)]) continue;
                const double value = obs(static_cast<Eigen::Index>(k), s);
                acc.add(value);
                max_abs = std::max(max_abs, std::abs(value));
            }
            series.mean_div_sum[k] = acc.count > 0
                                         ? acc.mean
                                         : std::numeric_limits<double>::quiet_NaN();
            series.stderr_div_sum[k] = acc.std_error();
            series.max_abs_div[k] = max_abs;
            series.samples_used = acc.count;
        }
        report.series.push_back(std::move(series));
    }
    return report;
}

std::vector<CheckResult> run_structural_checks(const GridSpec& grid,
                                               const NoiseSpec& noise_spec,
                                               std::uint64_t seed) {
    grid.validate();
    noise_spec.validate();
    const GridLayout layout = build_layout(grid);
    const MaxwellMatrix m = assemble(grid, layout);
    const double dt = 0.01;

    std::vector<CheckResult> results;
    auto push = [&](const std::string& name, double observed, double limit) {
        CheckResult r;
        r.name = name;
        r.observed = observed;
        r.limit = limit;
        r.passed = observed <= limit;
        results.push_back(r);
    };

    {
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 20; ++p) {
            const FieldState u = normalized_v(
                grid, random_state(grid, layout, seed, 100 + p, 1.0));
            const FieldState v = normalized_v(
                grid, random_state(grid, layout, seed, 200 + p, 1.0));
            const FieldState au = apply_maxwell(grid, u);
            const FieldState av = apply_maxwell(grid, v);
            worst = std::max(worst,
                             std::abs(v_inner(grid, au, v) + v_inner(grid, u, av)));
        }
        push("skew_adjointness", worst, 1e-12);
    }
    {
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 20; ++p) {
            const FieldState u = random_state(grid, layout, seed, 300 + p, 1.0);
            const Eigen::VectorXd lhs = m.action * to_vector(layout, u);
            const Eigen::VectorXd rhs = to_vector(layout, apply_maxwell(grid, u));
            const double scale = std::max(1.0, lhs.cwiseAbs().maxCoeff());
            worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() / scale);
        }
        push("stencil_matrix_agreement", worst, 1e-14);
    }

    const PropagatorCache prop = PropagatorCache::build(m, dt);
    {
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 100; ++p) {
            const FieldState u = random_state(grid, layout, seed, 400 + p, 1.0);
            const double before = v_norm(grid, u);
            const double after = v_norm(grid, prop.apply(grid, layout, u));
            worst = std::max(worst, std::abs(after - before) / before);
        }
        push("propagator_isometry", worst, 1e-12);
    }
    {
        const PropagatorCache back = PropagatorCache::build(m, -dt);
        const PropagatorCache twice = PropagatorCache::build(m, 2.0 * dt);
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 10; ++p) {
            const FieldState u = random_state(grid, layout, seed, 550 + p, 1.0);
            const Eigen::VectorXd v = to_vector(layout, u);
            const double norm = v.norm();
            const double round_trip = (back.apply(prop.apply(v)) - v).norm() / norm;
            const double composed =
                (prop.apply(prop.apply(v)) - twice.apply(v)).norm() / norm;
            worst = std::max(worst, std::max(round_trip, composed));
        }
        push("semigroup_composition", worst, 1e-10);
    }
    {
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 20; ++p) {
            const FieldState u = random_state(grid, layout, seed, 600 + p, 0.1);
            const FieldState au = apply_maxwell(grid, u);
            worst = std::max(worst, divergence_h(grid, au).abs().maxCoeff());
        }
        push("divergence_of_curl", worst, 1e-13);
    }
    {
        // Boundary e3 rows of the generator are structurally zero, so the
        // matrix is block triangular: its spectrum is a set of exact zeros
        // plus the spectrum of the restriction to the remaining variables.
        // The zero eigenvalue of the full matrix is defective, which caps
        // QR iteration accuracy near sqrt(eps); the restriction, after the
        // diagonal weight scaling (an eigenvalue-preserving similarity), is
        // normal and its computed real parts are trustworthy.
        const int n = grid.n_cells;
        std::vector<char> boundary(static_cast<std::size_t>(layout.dim), 0);
        for (int i = 0; i <= n; ++i) {
            boundary[static_cast<std::size_t>(layout.e3_index(i, 0))] = 1;
            boundary[static_cast<std::size_t>(layout.e3_index(i, n))] = 1;
            boundary[static_cast<std::size_t>(layout.e3_index(0, i))] = 1;
            boundary[static_cast<std::size_t>(layout.e3_index(n, i))] = 1;
        }
        std::vector<int> keep;
        keep.reserve(static_cast<std::size_t>(layout.dim));
        for (int r = 0; r < layout.dim; ++r) {
            if (!boundary[static_cast<std::size_t>(r)]) keep.push_back(r);
        }
        auto weight = [&](int r) {
            return r < layout.h1_offset() ? grid.epsilon : grid.mu;
        };
        const Eigen::MatrixXd dense(m.action);
        const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
        Eigen::MatrixXd restricted(nk, nk);
        for (Eigen::Index c = 0; c < nk; ++c) {
            for (Eigen::Index r = 0; r < nk; ++r) {
                const int rr = keep[static_cast<std::size_t>(r)];
                const int cc = keep[static_cast<std::size_t>(c)];
                restricted(r, c) =
                    dense(rr, cc) * std::sqrt(weight(rr) / weight(cc));
            }
        }
        const Eigen::EigenSolver<Eigen::MatrixXd> solver(restricted, false);
        push("generator_spectrum",
             solver.eigenvalues().real().cwiseAbs().maxCoeff(), 1e-10);
    }
    {
        const int n_modes =
            noise_spec.resolved_max_mode(grid) * noise_spec.resolved_max_mode(grid);
        const BrownianPath path(seed, 777, n_modes, 64, 1.0 / 64.0);
        double worst = 0.0;
        for (int factor : {2, 4, 8}) {
            for (int k = 0; k < 64 / factor; ++k) {
                Eigen::VectorXd manual =
                    Eigen::VectorXd::Zero(path.n_modes());
                for (int l = 0; l < factor; ++l) {
                    manual += path.fine().col(k * factor + l);
                }
                worst = std::max(
                    worst,
                    (path.coarse_increment(factor, k) - manual)
                        .cwiseAbs()
                        .maxCoeff());
            }
        }
        push("brownian_refinement", worst, 0.0);
    }
    {
        const PropagatorCache tiny = PropagatorCache::build(m, 1e-4);
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 10; ++p) {
            const FieldState u = random_state(grid, layout, seed, 700 + p, 1.0);
            const Eigen::VectorXd v = to_vector(layout, u);
            Eigen::VectorXd term = v;
            Eigen::VectorXd taylor = v;
            for (int j = 1; j <= 12; ++j) {
                term = (1e-4 / static_cast<double>(j)) * (m.action * term).eval();
                taylor += term;
            }
            worst = std::max(worst, (tiny.apply(v) - taylor).norm() / v.norm());
        }
        push("taylor_consistency", worst, 1e-8);
    }
    {
        double worst = 0.0;
        for (std::uint32_t p = 0; p < 10; ++p) {
            const FieldState u = random_state(grid, layout, seed, 800 + p, 1.0);
            const FieldState su = prop.apply(grid, layout, u);
            const int n = grid.n_cells;
            for (int i = 0; i <= n; ++i) {
                worst = std::max(worst, std::abs(su.e3(i, 0)));
                worst = std::max(worst, std::abs(su.e3(i, n)));
                worst = std::max(worst, std::abs(su.e3(0, i)));
                worst = std::max(worst, std::abs(su.e3(n, i)));
            }
        }
        push("pec_invariance", worst, 0.0);
    }
    {
        const SpectralNoise noise = SpectralNoise::build(
            layout, noise_spec.resolved_max_mode(grid), noise_spec.eta_threshold);
        const BrownianPath path(seed, 888, noise.mode_count(), 500, dt);
        ModelSpec model;
        model.drift = DriftKind::Zero;
        model.diffusion = DiffusionKind::AdditiveConstant;
        model.lambda_e = 0.5;
        model.lambda_h = 0.5;
        FieldState u = random_state(grid, layout, seed, 900, 1.0);
        FieldState v = random_state(grid, layout, seed, 901, 1.0);
        const double d0 = v_norm(grid, state_difference(u, v));
        double worst = 0.0;
        for (int k = 0; k < 500; ++k) {
            const FieldIncrements dw = sample_increments(grid, noise, path, 1, k);
            u = sexp_step(m, prop, model, u, dw);
            v = sexp_step(m, prop, model, v, dw);
            worst = std::max(
                worst, std::abs(v_norm(grid, state_difference(u, v)) - d0) / d0);
        }
        push("same_noise_difference_isometry", worst, 1e-11);
    }
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.passed; });
}

}  // namespace stomax
