#include "stomax/noise.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stomax {

double q_eigenvalue(int j, int k) {
    if (j < 1 || k < 1) {
        throw std::invalid_argument("q_eigenvalue: mode indices must be >= 1");
    }
    const double j3 = static_cast<double>(j) * j * j;
    const double k3 = static_cast<double>(k) * k * k;
    return 3.0 / (j3 + k3);
}

double basis_eval(int j, int k, double x, double y) {
    // sin(j pi x) vanishes analytically at x in {0, 1}; return the exact zero
    // instead of the rounded sin(j*pi) value.
    if (x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0) {
        return 0.0;
    }
    constexpr double pi = 3.14159265358979323846264338327950288;
    return 2.0 * std::sin(j * pi * x) * std::sin(k * pi * y);
}

SpectralNoise SpectralNoise::build(const GridLayout& layout, int max_mode,
                                   double eta_threshold) {
    if (max_mode < 1) {
        throw std::invalid_argument("noise: max_mode must be >= 1");
    }
    SpectralNoise noise;
    for (int k = 1; k <= max_mode; ++k) {
        for (int j = 1; j <= max_mode; ++j) {
            const double eta = q_eigenvalue(j, k);
            if (eta >= eta_threshold) {
                noise.modes.push_back({j, k, eta});
                noise.trace += eta;
            }
        }
    }
    if (noise.modes.empty()) {
        throw std::invalid_argument("noise: eta_threshold removed every mode");
    }

    const int m_count = noise.mode_count();
    noise.sqrt_eta.resize(m_count);
    for (int m = 0; m < m_count; ++m) {
        noise.sqrt_eta(m) = std::sqrt(noise.modes[m].eta);
    }

    auto fill = [&](const std::vector<GridLayout::Point>& pts, Eigen::MatrixXd& mat) {
        mat.resize(static_cast<Eigen::Index>(pts.size()), m_count);
        for (int m = 0; m < m_count; ++m) {
            const auto& mode = noise.modes[m];
            for (std::size_t p = 0; p < pts.size(); ++p) {
                mat(static_cast<Eigen::Index>(p), m) =
                    basis_eval(mode.j, mode.k, pts[p].x, pts[p].y);
            }
        }
    };
    fill(layout.e3_points, noise.basis_e3);
    fill(layout.h1_points, noise.basis_h1);
    fill(layout.h2_points, noise.basis_h2);
    return noise;
}

double trace_q(const SpectralNoise& noise) {
    if (noise.modes.empty()) {
        throw std::invalid_argument("trace_q: no retained modes");
    }
    return noise.trace;
}

BrownianPath::BrownianPath(std::uint64_t master_seed, std::uint32_t sample_index,
                           int n_modes, int n_fine, double dt_fine)
    : dt_fine_(dt_fine), seed_(master_seed), sample_(sample_index) {
    if (n_modes < 1 || n_fine < 0) {
        throw std::invalid_argument("BrownianPath: invalid mode or step count");
    }
    if (!(dt_fine > 0.0) || !std::isfinite(dt_fine)) {
        throw std::invalid_argument("BrownianPath: dt_fine must be positive finite");
    }
    fine_.resize(n_modes, n_fine);
    const double scale = std::sqrt(dt_fine);
    for (int step = 0; step < n_fine; ++step) {
        for (int m = 0; m < n_modes; ++m) {
            fine_(m, step) = scale * normal_draw(master_seed, sample_index,
                                                 static_cast<std::uint32_t>(m),
                                                 static_cast<std::uint32_t>(step));
        }
    }
}

double BrownianPath::fine_increment(std::uint64_t master_seed, std::uint32_t sample_index,
                                    std::uint32_t mode, std::uint32_t step,
                                    double dt_fine) {
    return std::sqrt(dt_fine) * normal_draw(master_seed, sample_index, mode, step);
}

Eigen::VectorXd BrownianPath::coarse_increment(int factor, int step) const {
    const int nf = n_fine();
    if (factor < 1 || nf % factor != 0) {
        throw std::invalid_argument("BrownianPath: coarsening factor must divide n_fine");
    }
    if (step < 0 || step >= nf / factor) {
        throw std::invalid_argument("BrownianPath: coarse step " + std::to_string(step) +
                                    " out of range");
    }
    Eigen::VectorXd sum = fine_.col(static_cast<Eigen::Index>(step) * factor);
    for (int l = 1; l < factor; ++l) {
        sum += fine_.col(static_cast<Eigen::Index>(step) * factor + l);
    }
    return sum;
}

FieldIncrements sample_increments(const GridSpec& spec, const SpectralNoise& noise,
                                  const BrownianPath& path, int factor, int step) {
    if (path.n_modes() != noise.mode_count()) {
        throw std::invalid_argument("sample_increments: path/noise mode count mismatch");
    }
    const Eigen::VectorXd w =
        noise.sqrt_eta.cwiseProduct(path.coarse_increment(factor, step));
    const int n = spec.n_cells;
    const Eigen::VectorXd ve = noise.basis_e3 * w;
    const Eigen::VectorXd vh1 = noise.basis_h1 * w;
    const Eigen::VectorXd vh2 = noise.basis_h2 * w;
    FieldIncrements dw;
    dw.e3 = Eigen::Map<const Eigen::ArrayXXd>(ve.data(), n + 1, n + 1);
    dw.h1 = Eigen::Map<const Eigen::ArrayXXd>(vh1.data(), n + 1, n);
    dw.h2 = Eigen::Map<const Eigen::ArrayXXd>(vh2.data(), n, n + 1);
    return dw;
}

}  // namespace stomax
