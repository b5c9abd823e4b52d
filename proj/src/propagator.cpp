#include "stomax/propagator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

namespace stomax {

namespace {

using Triplet = Eigen::Triplet<double>;

void push_curl_rows(const GridSpec& spec, const GridLayout& layout,
                    std::vector<Triplet>& trips) {
    const int n = spec.n_cells;
    const double inv_eps_dx = 1.0 / (spec.epsilon * spec.dx);
    const double inv_eps_dy = 1.0 / (spec.epsilon * spec.dy);
    const double inv_mu_dx = 1.0 / (spec.mu * spec.dx);
    const double inv_mu_dy = 1.0 / (spec.mu * spec.dy);

    // Interior e3 rows: eps^-1 (d h2 / dx - d h1 / dy).  Boundary e3 rows
    // stay empty, matching the PEC condition.
    for (int j = 1; j < n; ++j) {
        for (int i = 1; i < n; ++i) {
            const auto row = layout.e3_index(i, j);
            trips.emplace_back(row, layout.h2_index(i, j), inv_eps_dx);
            trips.emplace_back(row, layout.h2_index(i - 1, j), -inv_eps_dx);
            trips.emplace_back(row, layout.h1_index(i, j), -inv_eps_dy);
            trips.emplace_back(row, layout.h1_index(i, j - 1), inv_eps_dy);
        }
    }
    // h1 rows: -mu^-1 d e3 / dy.
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= n; ++i) {
            const auto row = layout.h1_index(i, j);
            trips.emplace_back(row, layout.e3_index(i, j + 1), -inv_mu_dy);
            trips.emplace_back(row, layout.e3_index(i, j), inv_mu_dy);
        }
    }
    // h2 rows: mu^-1 d e3 / dx.
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i < n; ++i) {
            const auto row = layout.h2_index(i, j);
            trips.emplace_back(row, layout.e3_index(i + 1, j), inv_mu_dx);
            trips.emplace_back(row, layout.e3_index(i, j), -inv_mu_dx);
        }
    }
}

/**
 * Replace the structurally trivial rows of the Pade exponential with their
 * exact values.  Boundary e3 rows of the generator are zero, and the h rows
 * on the x = {0,1} (h1) and y = {0,1} (h2) edges only reference boundary e3
 * columns, so the corresponding rows of A^2 vanish and the series truncates
 * after the linear term.  Writing those rows exactly keeps boundary magnetic
 * values from accumulating rounding drift over long runs.
 */
void exactify_structural_rows(const GridSpec& spec, const GridLayout& layout,
                              double dt, Eigen::MatrixXd& exp_matrix) {
    const int n = spec.n_cells;
    const double mu_dx = dt / (spec.mu * spec.dx);
    const double mu_dy = dt / (spec.mu * spec.dy);
    auto fix_e3 = [&](int i, int j) {
        const auto row = layout.e3_index(i, j);
        exp_matrix.row(row).setZero();
        exp_matrix(row, row) = 1.0;
    };
    for (int i = 0; i <= n; ++i) {
        fix_e3(i, 0);
        fix_e3(i, n);
    }
    for (int j = 1; j < n; ++j) {
        fix_e3(0, j);
        fix_e3(n, j);
    }
    for (int j = 0; j < n; ++j) {
        for (int i : {0, n}) {
            const auto row = layout.h1_index(i, j);
            exp_matrix.row(row).setZero();
            exp_matrix(row, row) = 1.0;
            exp_matrix(row, layout.e3_index(i, j + 1)) = -mu_dy;
            exp_matrix(row, layout.e3_index(i, j)) = mu_dy;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j : {0, n}) {
            const auto row = layout.h2_index(i, j);
            exp_matrix.row(row).setZero();
            exp_matrix(row, row) = 1.0;
            exp_matrix(row, layout.e3_index(i + 1, j)) = mu_dx;
            exp_matrix(row, layout.e3_index(i, j)) = -mu_dx;
        }
    }
}

}  // namespace

MaxwellMatrix assemble(const GridSpec& spec, const GridLayout& layout,
                       Eigen::Index max_dim) {
    spec.validate();
    if (layout.dim > max_dim) {
        throw std::invalid_argument(
            "assemble: state dimension " + std::to_string(layout.dim) +
            " exceeds limit " + std::to_string(max_dim));
    }
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(8 * layout.dim));
    push_curl_rows(spec, layout, trips);

    MaxwellMatrix m;
    m.spec = spec;
    m.layout = layout;
    m.action.resize(layout.dim, layout.dim);
    m.action.setFromTriplets(trips.begin(), trips.end());
    m.action.makeCompressed();
    return m;
}

PropagatorCache::PropagatorCache(double dt, Eigen::MatrixXd exp_matrix)
    : dt_(dt), exp_(std::move(exp_matrix)) {}

PropagatorCache PropagatorCache::build(const MaxwellMatrix& m, double dt) {
    if (!std::isfinite(dt)) {
        throw std::invalid_argument("PropagatorCache: dt must be finite");
    }
    if (dt == 0.0) {
        return PropagatorCache(
            dt, Eigen::MatrixXd::Identity(m.dim(), m.dim()));
    }
    Eigen::MatrixXd scaled = dt * Eigen::MatrixXd(m.action);
    Eigen::MatrixXd exp_matrix = scaled.exp();
    exactify_structural_rows(m.spec, m.layout, dt, exp_matrix);
    return PropagatorCache(dt, std::move(exp_matrix));
}

Eigen::VectorXd PropagatorCache::apply(const Eigen::VectorXd& v) const {
    if (v.size() != exp_.cols()) {
        throw std::invalid_argument("PropagatorCache::apply: size mismatch");
    }
    return exp_ * v;
}

Eigen::MatrixXd PropagatorCache::apply_block(
    const Eigen::MatrixXd& states) const {
    if (states.rows() != exp_.cols()) {
        throw std::invalid_argument(
            "PropagatorCache::apply_block: row count mismatch");
    }
    return exp_ * states;
}

FieldState PropagatorCache::apply(const GridSpec& spec,
                                  const GridLayout& layout,
                                  const FieldState& u) const {
    return from_vector(spec, layout, apply(to_vector(layout, u)));
}

SemSolveCache::SemSolveCache(double dt, const MaxwellMatrix& m)
    : dt_(dt), action_(m.action) {
    Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(m.dim(), m.dim()) -
        dt * Eigen::MatrixXd(m.action);
    lu_.compute(system);
}

SemSolveCache SemSolveCache::build(const MaxwellMatrix& m, double dt) {
    if (!std::isfinite(dt)) {
        throw std::invalid_argument("SemSolveCache: dt must be finite");
    }
    return SemSolveCache(dt, m);
}

Eigen::VectorXd SemSolveCache::solve(const Eigen::VectorXd& b) const {
    if (b.size() != lu_.rows()) {
        throw std::invalid_argument("SemSolveCache::solve: size mismatch");
    }
    Eigen::VectorXd x = lu_.solve(b);
    const double residual = (x - dt_ * (action_ * x) - b).norm();
    if (residual > residual_tol_ * b.norm()) {
        throw std::runtime_error(
            "SemSolveCache::solve: residual " + std::to_string(residual) +
            " exceeds tolerance");
    }
    return x;
}

Eigen::MatrixXd SemSolveCache::solve_block(const Eigen::MatrixXd& rhs) const {
    if (rhs.rows() != lu_.rows()) {
        throw std::invalid_argument(
            "SemSolveCache::solve_block: row count mismatch");
    }
    Eigen::MatrixXd x = lu_.solve(rhs);
    const Eigen::MatrixXd residual = x - dt_ * (action_ * x) - rhs;
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        if (residual.col(c).norm() > residual_tol_ * rhs.col(c).norm()) {
            throw std::runtime_error(
                "SemSolveCache::solve_block: residual exceeds tolerance");
        }
    }
    return x;
}

}  // namespace stomax
