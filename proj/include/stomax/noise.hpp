#pragma once

#include "stomax/grid.hpp"
#include "stomax/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace stomax {

/// Covariance eigenvalue of the noise spectrum: 3 / (j^3 + k^3).
double q_eigenvalue(int j, int k);

/**
 * @brief Orthonormal sine basis on the unit square: 2 sin(j pi x) sin(k pi y).
 *
 * Returns exactly zero on the boundary of [0,1]^2 so e3-family increments
 * vanish at boundary nodes without any post-hoc masking.
 */
double basis_eval(int j, int k, double x, double y);

/**
 * @brief Truncated spectral representation of the Q-Wiener process.
 *
 * Holds the retained (j, k, eta) modes and the basis evaluated at every
 * stagger coordinate of each DOF family (one column per mode, rows in the
 * family's local flat order).
 */
struct SpectralNoise {
    struct Mode {
        int j, k;
        double eta;
    };
    std::vector<Mode> modes;
    Eigen::VectorXd sqrt_eta;   // per retained mode
    Eigen::MatrixXd basis_e3;   // (n+1)^2 x M
    Eigen::MatrixXd basis_h1;   // (n+1)n x M
    Eigen::MatrixXd basis_h2;   // n(n+1) x M
    double trace{0.0};

    int mode_count() const { return static_cast<int>(modes.size()); }

    /**
     * Retains modes 1 <= j,k <= max_mode with eta >= eta_threshold and caches
     * basis values at the layout's stagger points. Throws when no mode
     * survives the filter.
     */
    static SpectralNoise build(const GridLayout& layout, int max_mode,
                               double eta_threshold = 0.0);
};

/// Sum of retained eigenvalues.
double trace_q(const SpectralNoise& noise);

/**
 * @brief Per-mode Brownian increments on the finest step grid of one sample.
 *
 * Entry (m, l) is xi * sqrt(dt_fine) for fine step l of mode m, generated
 * from the counter-based stream keyed by (seed, sample, mode, step); any
 * entry is replayable bit-identically via fine_increment(). Coarse
 * increments are exact left-to-right sums of their constituent fine entries.
 */
class BrownianPath {
public:
    BrownianPath(std::uint64_t master_seed, std::uint32_t sample_index, int n_modes,
                 int n_fine, double dt_fine);

    const Eigen::MatrixXd& fine() const { return fine_; }
    int n_fine() const { return static_cast<int>(fine_.cols()); }
    int n_modes() const { return static_cast<int>(fine_.rows()); }
    double dt_fine() const { return dt_fine_; }
    std::uint64_t seed() const { return seed_; }
    std::uint32_t sample_index() const { return sample_; }

    /// Sum of fine columns [step*factor, (step+1)*factor); factor must divide n_fine.
    Eigen::VectorXd coarse_increment(int factor, int step) const;

    /// Stateless replay of a single fine entry (already scaled by sqrt(dt_fine)).
    static double fine_increment(std::uint64_t master_seed, std::uint32_t sample_index,
                                 std::uint32_t mode, std::uint32_t step, double dt_fine);

private:
    Eigen::MatrixXd fine_;  // modes x n_fine
    double dt_fine_;
    std::uint64_t seed_;
    std::uint32_t sample_;
};

/// Noise increment evaluated at every stagger coordinate, shaped per family.
struct FieldIncrements {
    Eigen::ArrayXXd e3;
    Eigen::ArrayXXd h1;
    Eigen::ArrayXXd h2;
};

/**
 * @brief Evaluate one coarse Wiener increment at all DOF coordinates.
 *
 * DW(x) = sum_m sqrt(eta_m) e_m(x) * (summed fine Gaussian increments).
 * `factor` is the coarsening factor relative to the path's fine grid.
 */
FieldIncrements sample_increments(const GridSpec& spec, const SpectralNoise& noise,
                                  const BrownianPath& path, int factor, int step);

}  // namespace stomax
