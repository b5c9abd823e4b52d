#pragma once

#include <cstdint>
#include <vector>

namespace stomax {

/**
 * @brief Streaming mean and variance accumulator.
 *
 * Numerically stable single-pass updates; merge() combines two accumulators
 * as if their samples had been added to one, which keeps reductions over
 * per-block partial results exact in structure and independent of thread
 * count when merged in a fixed order.
 */
struct Welford {
    long long count{0};
    double mean{0.0};
    double m2{0.0};

    void add(double x);
    void merge(const Welford& other);

    /// Unbiased sample variance; zero until two samples are present.
    double variance() const;

    /// Standard error of the mean, sqrt(variance / count).
    double std_error() const;
};

/// RMS of the underlying samples when the accumulator collected squares,
/// with a delta-method standard error.
struct RmsEstimate {
    double rms{0.0};
    double stderr_rms{0.0};
};

RmsEstimate rms_from_squares(const Welford& squares);

struct LineFit {
    double slope{0.0};
    double intercept{0.0};
};

/// Least-squares line through (x, y); requires at least two points.
LineFit fit_affine_line(const std::vector<double>& x,
                        const std::vector<double>& y);

/// Least-squares line through (log x, log y); every entry must be positive.
LineFit fit_loglog_line(const std::vector<double>& x,
                        const std::vector<double>& y);

double fit_affine_slope(const std::vector<double>& x,
                        const std::vector<double>& y);

double fit_loglog_slope(const std::vector<double>& x,
                        const std::vector<double>& y);

}  // namespace stomax
