#include "stomax/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stomax {

GridSpec::GridSpec(int n, double eps, double mu_in, double kappa_in)
    : n_cells(n), dx(1.0 / n), dy(1.0 / n), epsilon(eps), mu(mu_in), kappa(kappa_in) {
    validate();
}

void GridSpec::validate() const {
    if (n_cells < 2) {
        throw std::invalid_argument("grid: n_cells must be >= 2, got " +
                                    std::to_string(n_cells));
    }
    if (!(kappa > 0.0)) {
        throw std::invalid_argument("grid: kappa must be positive");
    }
    if (!(epsilon >= kappa) || !(mu >= kappa)) {
        throw std::invalid_argument("grid: epsilon and mu must be >= kappa");
    }
    const double ulp = std::nextafter(1.0, 2.0) - 1.0;
    if (std::abs(dx * n_cells - 1.0) > ulp || std::abs(dy * n_cells - 1.0) > ulp) {
        throw std::invalid_argument("grid: dx, dy must equal 1/n_cells");
    }
}

FieldState FieldState::zero(const GridSpec& spec) {
    const int n = spec.n_cells;
    FieldState u;
    u.e3 = Eigen::ArrayXXd::Zero(n + 1, n + 1);
    u.h1 = Eigen::ArrayXXd::Zero(n + 1, n);
    u.h2 = Eigen::ArrayXXd::Zero(n, n + 1);
    return u;
}

bool FieldState::same_shape(const FieldState& other) const {
    return e3.rows() == other.e3.rows() && e3.cols() == other.e3.cols() &&
           h1.rows() == other.h1.rows() && h1.cols() == other.h1.cols() &&
           h2.rows() == other.h2.rows() && h2.cols() == other.h2.cols();
}

bool FieldState::all_finite() const {
    return e3.allFinite() && h1.allFinite() && h2.allFinite();
}

void enforce_pec(FieldState& u) {
    const auto rows = u.e3.rows();
    const auto cols = u.e3.cols();
    u.e3.row(0).setZero();
    u.e3.row(rows - 1).setZero();
    u.e3.col(0).setZero();
    u.e3.col(cols - 1).setZero();
}

bool pec_satisfied(const FieldState& u, double tol) {
    const auto rows = u.e3.rows();
    const auto cols = u.e3.cols();
    const double m = std::max(std::max(u.e3.row(0).abs().maxCoeff(),
                                       u.e3.row(rows - 1).abs().maxCoeff()),
                              std::max(u.e3.col(0).abs().maxCoeff(),
                                       u.e3.col(cols - 1).abs().maxCoeff()));
    return m <= tol;
}

namespace {

void check_shapes(const GridSpec& spec, const FieldState& u, const char* where) {
    const int n = spec.n_cells;
    if (u.e3.rows() != n + 1 || u.e3.cols() != n + 1 || u.h1.rows() != n + 1 ||
        u.h1.cols() != n || u.h2.rows() != n || u.h2.cols() != n + 1) {
        throw std::invalid_argument(std::string(where) + ": state shape does not match grid");
    }
}

}  // namespace

GridLayout build_layout(const GridSpec& spec) {
    spec.validate();
    const int n = spec.n_cells;
    GridLayout layout;
    layout.n = n;
    layout.dim = (n + 1) * (n + 1) + 2 * (n + 1) * n;

    const double dn = static_cast<double>(n);
    layout.e3_points.resize((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            layout.e3_points[j * (n + 1) + i] = {i / dn, j / dn};
        }
    }
    layout.h1_points.resize((n + 1) * n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= n; ++i) {
            layout.h1_points[j * (n + 1) + i] = {i / dn, (j + 0.5) / dn};
        }
    }
    layout.h2_points.resize(n * (n + 1));
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i < n; ++i) {
            layout.h2_points[j * n + i] = {(i + 0.5) / dn, j / dn};
        }
    }
    return layout;
}

Eigen::VectorXd to_vector(const GridLayout& layout, const FieldState& u) {
    Eigen::VectorXd v(layout.dim);
    const int n = layout.n;
    std::copy(u.e3.data(), u.e3.data() + (n + 1) * (n + 1), v.data() + layout.e3_offset());
    std::copy(u.h1.data(), u.h1.data() + (n + 1) * n, v.data() + layout.h1_offset());
    std::copy(u.h2.data(), u.h2.data() + n * (n + 1), v.data() + layout.h2_offset());
    return v;
}

FieldState from_vector(const GridSpec& spec, const GridLayout& layout,
                       const Eigen::VectorXd& v) {
    if (v.size() != layout.dim) {
        throw std::invalid_argument("from_vector: vector length does not match layout");
    }
    const int n = layout.n;
    FieldState u = FieldState::zero(spec);
    std::copy(v.data() + layout.e3_offset(), v.data() + layout.e3_offset() + (n + 1) * (n + 1),
              u.e3.data());
    std::copy(v.data() + layout.h1_offset(), v.data() + layout.h1_offset() + (n + 1) * n,
              u.h1.data());
    std::copy(v.data() + layout.h2_offset(), v.data() + layout.h2_offset() + n * (n + 1),
              u.h2.data());
    return u;
}

FieldState apply_maxwell(const GridSpec& spec, const FieldState& u) {
    check_shapes(spec, u, "apply_maxwell");
    const int n = spec.n_cells;
    const double inv_eps_dx = 1.0 / (spec.epsilon * spec.dx);
    const double inv_eps_dy = 1.0 / (spec.epsilon * spec.dy);
    const double inv_mu_dx = 1.0 / (spec.mu * spec.dx);
    const double inv_mu_dy = 1.0 / (spec.mu * spec.dy);

    FieldState out = FieldState::zero(spec);
    // e3 rows: scaled 2D curl of (h1, h2) at interior nodes, boundary pinned.
    for (int j = 1; j < n; ++j) {
        for (int i = 1; i < n; ++i) {
            out.e3(i, j) = inv_eps_dx * (u.h2(i, j) - u.h2(i - 1, j)) -
                           inv_eps_dy * (u.h1(i, j) - u.h1(i, j - 1));
        }
    }
    // h rows: scaled curl of e3. Boundary h DOFs come out zero because the
    // adjacent e3 values are boundary nodes.
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= n; ++i) {
            out.h1(i, j) = -inv_mu_dy * (u.e3(i, j + 1) - u.e3(i, j));
        }
    }
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i < n; ++i) {
            out.h2(i, j) = inv_mu_dx * (u.e3(i + 1, j) - u.e3(i, j));
        }
    }
    return out;
}

Eigen::ArrayXXd divergence_h(const GridSpec& spec, const FieldState& u) {
    check_shapes(spec, u, "divergence_h");
    const int n = spec.n_cells;
    Eigen::ArrayXXd div(n, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            div(i, j) = (u.h1(i + 1, j) - u.h1(i, j)) / spec.dx +
                        (u.h2(i, j + 1) - u.h2(i, j)) / spec.dy;
        }
    }
    return div;
}

double v_inner(const GridSpec& spec, const FieldState& u, const FieldState& v) {
    check_shapes(spec, u, "v_inner");
    check_shapes(spec, v, "v_inner");
    const double se = (u.e3 * v.e3).sum();
    const double sh = (u.h1 * v.h1).sum() + (u.h2 * v.h2).sum();
    return spec.dx * spec.dy * (spec.epsilon * se + spec.mu * sh);
}

double v_norm(const GridSpec& spec, const FieldState& u) {
    return std::sqrt(v_inner(spec, u, u));
}

double energy(const GridSpec& spec, const FieldState& u) {
    check_shapes(spec, u, "energy");
    return spec.dx * spec.dy *
           (u.e3.square().sum() + u.h1.square().sum() + u.h2.square().sum());
}

}  // namespace stomax
