#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace stomax {

/**
 * @brief Uniform staggered grid on the unit square for the 2D TM system.
 *
 * The grid has n_cells x n_cells cells, dx = dy = 1/n_cells, and uniform
 * positive material constants epsilon and mu.
 */
struct GridSpec {
    int n_cells{16};
    double dx{1.0 / 16.0};
    double dy{1.0 / 16.0};
    double epsilon{1.0};
    double mu{1.0};
    double kappa{1e-8};  // lower bound enforced on epsilon and mu

    GridSpec() = default;
    GridSpec(int n, double eps, double mu_in, double kappa_in = 1e-8);

    /// Throws std::invalid_argument when any invariant is violated.
    void validate() const;
};

/**
 * @brief Discrete TM state U = (E3, H1, H2) on the staggered grid.
 *
 * e3 lives at integer nodes (i, j), i,j = 0..n (shape (n+1) x (n+1));
 * h1 at vertical-edge midpoints (i, j+1/2), shape (n+1) x n;
 * h2 at horizontal-edge midpoints (i+1/2, j), shape n x (n+1).
 * Row index is i (x direction), column index is j (y direction).
 */
struct FieldState {
    Eigen::ArrayXXd e3;
    Eigen::ArrayXXd h1;
    Eigen::ArrayXXd h2;

    static FieldState zero(const GridSpec& spec);
    bool same_shape(const FieldState& other) const;
    bool all_finite() const;
};

/// Zero the e3 boundary rows/columns (perfect-conductor condition).
void enforce_pec(FieldState& u);

/// True when e3 vanishes on every boundary node.
bool pec_satisfied(const FieldState& u, double tol = 0.0);

/**
 * @brief Stagger coordinates and flat index maps for the three DOF families.
 *
 * Flat order: e3 block, then h1, then h2; within a family the local index is
 * column-major (j * rows + i), matching Eigen's storage so a state flattens
 * to a contiguous vector.
 */
struct GridLayout {
    int n{0};    // cells per side
    int dim{0};  // (n+1)^2 + (n+1)n + n(n+1)

    struct Point {
        double x, y;
    };
    std::vector<Point> e3_points;  // local order
    std::vector<Point> h1_points;
    std::vector<Point> h2_points;

    int e3_offset() const { return 0; }
    int h1_offset() const { return (n + 1) * (n + 1); }
    int h2_offset() const { return (n + 1) * (n + 1) + (n + 1) * n; }

    int e3_index(int i, int j) const { return e3_offset() + j * (n + 1) + i; }
    int h1_index(int i, int j) const { return h1_offset() + j * (n + 1) + i; }
    int h2_index(int i, int j) const { return h2_offset() + j * n + i; }
};

/// Build coordinates and index maps; rejects invalid specs.
GridLayout build_layout(const GridSpec& spec);

/// Flatten a state into the layout's vector order.
Eigen::VectorXd to_vector(const GridLayout& layout, const FieldState& u);

/// Inverse of to_vector.
FieldState from_vector(const GridSpec& spec, const GridLayout& layout,
                       const Eigen::VectorXd& v);

/**
 * @brief Apply the discrete Maxwell generator A_h.
 *
 * Interior e3 nodes receive the scaled discrete curl of (h1, h2); boundary
 * e3 nodes are pinned to zero. h rows are the scaled discrete curl of e3.
 */
FieldState apply_maxwell(const GridSpec& spec, const FieldState& u);

/// Cell-centered discrete divergence of the magnetic field, shape n x n.
Eigen::ArrayXXd divergence_h(const GridSpec& spec, const FieldState& u);

/// Weighted inner product: dx*dy*(eps <e3,e3> + mu (<h1,h1> + <h2,h2>)).
double v_inner(const GridSpec& spec, const FieldState& u, const FieldState& v);

/// sqrt(v_inner(u, u)).
double v_norm(const GridSpec& spec, const FieldState& u);

/// Unweighted field energy dx*dy*sum(e3^2 + h1^2 + h2^2).
double energy(const GridSpec& spec, const FieldState& u);

}  // namespace stomax
