#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "stomax/grid.hpp"

namespace stomax {

// Sparse assembly of the discrete Maxwell operator acting on stacked state
// vectors in layout order.  The matrix reproduces apply_maxwell exactly,
// entry for entry, including the zero rows for boundary e3 nodes.
struct MaxwellMatrix {
    GridSpec spec;
    GridLayout layout;
    Eigen::SparseMatrix<double> action;

    Eigen::Index dim() const { return action.rows(); }
};

// Builds the sparse operator.  Throws std::invalid_argument when the state
// dimension exceeds max_dim; dense downstream factorizations are only
// intended for desk-scale grids.
MaxwellMatrix assemble(const GridSpec& spec, const GridLayout& layout,
                       Eigen::Index max_dim = 20000);

// Dense matrix exponential exp(dt * A) of the Maxwell operator, cached for a
// fixed step size.  The operator is skew-adjoint in the material inner
// product, so the propagator is an isometry of the V-norm; tests hold it to
// that standard.
class PropagatorCache {
public:
    static PropagatorCache build(const MaxwellMatrix& m, double dt);

    double dt() const { return dt_; }
    Eigen::Index dim() const { return exp_.rows(); }
    const Eigen::MatrixXd& matrix() const { return exp_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd apply_block(const Eigen::MatrixXd& states) const;

    FieldState apply(const GridSpec& spec, const GridLayout& layout,
                     const FieldState& u) const;

private:
    PropagatorCache(double dt, Eigen::MatrixXd exp_matrix);

    double dt_ = 0.0;
    Eigen::MatrixXd exp_;
};

// LU factorization of (I - dt * A) for the semi-implicit scheme.  Solves are
// verified against the sparse operator; a residual above tol * ||b|| is
// reported as a runtime_error rather than silently accepted.
class SemSolveCache {
public:
    static SemSolveCache build(const MaxwellMatrix& m, double dt);

    double dt() const { return dt_; }
    Eigen::Index dim() const { return lu_.rows(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve_block(const Eigen::MatrixXd& rhs) const;

private:
    SemSolveCache(double dt, const MaxwellMatrix& m);

    double dt_ = 0.0;
    double residual_tol_ = 1e-10;
    Eigen::SparseMatrix<double> action_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace stomax
