#include "stomax/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace stomax {

void Welford::add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
}

void Welford::merge(const Welford& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    const double delta = other.mean - mean;
    const long long total = count + other.count;
    mean += delta * static_cast<double>(other.count) / static_cast<double>(total);
    m2 += other.m2 + delta * delta * static_cast<double>(count) *
                         static_cast<double>(other.count) /
                         static_cast<double>(total);
    count = total;
}

double Welford::variance() const {
    if (count < 2) return 0.0;
    return m2 / static_cast<double>(count - 1);
}

double Welford::std_error() const {
    if (count < 1) return 0.0;
    return std::sqrt(variance() / static_cast<double>(count));
}

RmsEstimate rms_from_squares(const Welford& squares) {
    RmsEstimate est;
    if (squares.count < 1 || squares.mean < 0.0) return est;
    est.rms = std::sqrt(squares.mean);
    const double se_mean = squares.std_error();
    // First-order propagation through sqrt; degenerate at rms = 0.
    est.stderr_rms = est.rms > 0.0 ? se_mean / (2.0 * est.rms) : 0.0;
    return est;
}

LineFit fit_affine_line(const std::vector<double>& x,
                        const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("fit_affine_line: need two matched points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) {
        throw std::invalid_argument("fit_affine_line: abscissae are all equal");
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

LineFit fit_loglog_line(const std::vector<double>& x,
                        const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("fit_loglog_line: need two matched points");
    }
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw std::invalid_argument(
                "fit_loglog_line: inputs must be strictly positive");
        }
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return fit_affine_line(lx, ly);
}

double fit_affine_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
    return fit_affine_line(x, y).slope;
}

double fit_loglog_slope(const std::vector<double>& x,
                        const std::vector<double>& y) {
    return fit_loglog_line(x, y).slope;
}

}  // namespace stomax
