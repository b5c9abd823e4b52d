#include "stomax/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stomax {

namespace {

void append_shared_header(std::ostringstream& out, const RunConfig& cfg,
                          const ModelSpec& model) {
    out << "command: " << to_string(cfg.kind) << "\n";
    out << "grid: n_cells=" << cfg.grid.n_cells
        << " epsilon=" << csv_number(cfg.grid.epsilon)
        << " mu=" << csv_number(cfg.grid.mu) << "\n";
    out << "noise: max_mode=" << cfg.noise.resolved_max_mode(cfg.grid)
        << " eta_threshold=" << csv_number(cfg.noise.eta_threshold) << "\n";
    out << "model: drift=" << to_string(model.drift)
        << " diffusion=" << to_string(model.diffusion)
        << " lambda_e=" << csv_number(model.lambda_e)
        << " lambda_h=" << csv_number(model.lambda_h) << "\n";
    out << "seed: " << cfg.seed << "\n";
    out << "threads: " << cfg.threads << "\n";
}

}  // namespace

std::string csv_number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    if (res.ec != std::errc{}) {
        throw std::runtime_error("csv_number: conversion failed");
    }
    return std::string(buf, res.ptr);
}

std::string convergence_csv(const ConvergenceReport& report) {
    std::ostringstream out;
    out << "dt,rms_error,stderr,samples_used\n";
    for (const ConvergenceLevelResult& lvl : report.levels) {
        out << csv_number(lvl.dt) << ',' << csv_number(lvl.rms_error) << ','
            << csv_number(lvl.stderr_error) << ',' << lvl.samples_used << "\n";
    }
    return out.str();
}

std::string trace_csv(const TraceReport& report) {
    std::ostringstream out;
    out << "scheme,step,time,mean_energy,stderr,theory_energy\n";
    for (const EnergySeries& series : report.series) {
        const std::string name = to_string(series.scheme);
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            out << name << ',' << k << ',' << csv_number(report.times[k]) << ','
                << csv_number(series.mean_energy[k]) << ','
                << csv_number(series.stderr_energy[k]) << ','
                << csv_number(report.theory_energy[k]) << "\n";
        }
    }
    return out.str();
}

std::string divergence_csv(const DivergenceReport& report) {
    std::ostringstream out;
    out << "scheme,step,time,mean_div_sum,stderr,max_abs_div\n";
    for (const DivergenceSeries& series : report.series) {
        const std::string name = to_string(series.scheme);
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            out << name << ',' << k << ',' << csv_number(report.times[k]) << ','
                << csv_number(series.mean_div_sum[k]) << ','
                << csv_number(series.stderr_div_sum[k]) << ','
                << csv_number(series.max_abs_div[k]) << "\n";
        }
    }
    return out.str();
}

std::string convergence_summary(const RunConfig& cfg,
                                const ConvergenceReport& report) {
    std::ostringstream out;
    append_shared_header(out, cfg, cfg.convergence.model);
    out << "scheme: " << to_string(report.scheme) << "\n";
    out << "error_metric: " << to_string(report.metric) << "\n";
    out << "t_final: " << csv_number(cfg.convergence.t_final) << "\n";
    out << "dt_ref: " << csv_number(cfg.convergence.dt_ref) << "\n";
    out << "samples: " << report.samples_total << "\n";
    out << "\n";
    for (const ConvergenceLevelResult& lvl : report.levels) {
        out << "dt=" << csv_number(lvl.dt)
            << " rms_error=" << csv_number(lvl.rms_error)
            << " stderr=" << csv_number(lvl.stderr_error)
            << " used=" << lvl.samples_used
            << " excluded=" << lvl.samples_excluded << "\n";
    }
    out << "\n";
    out << "fitted_slope: " << csv_number(report.slope) << "\n";
    out << "fitted_intercept: " << csv_number(report.intercept) << "\n";
    return out.str();
}

std::string trace_summary(const RunConfig& cfg, const TraceReport& report) {
    std::ostringstream out;
    append_shared_header(out, cfg, cfg.trace.model);
    out << "t_final: " << csv_number(cfg.trace.t_final) << "\n";
    out << "dt: " << csv_number(cfg.trace.dt) << "\n";
    out << "samples: " << cfg.trace.samples << "\n";
    out << "theoretical_drift_rate: " << csv_number(report.k_h) << "\n";
    out << "initial_energy: " << csv_number(report.initial_energy) << "\n";
    out << "theory_final_energy: " << csv_number(report.theory_energy.back())
        << "\n";
    out << "\n";
    for (const EnergySeries& series : report.series) {
        out << "scheme=" << to_string(series.scheme)
            << " fitted_slope=" << csv_number(series.fitted_slope)
            << " final_mean_energy=" << csv_number(series.final_mean_energy)
            << " used=" << series.samples_used
            << " excluded=" << series.samples_excluded << "\n";
    }
    return out.str();
}

std::string divergence_summary(const RunConfig& cfg,
                               const DivergenceReport& report) {
    std::ostringstream out;
    append_shared_header(out, cfg, cfg.trace.model);
    out << "t_final: " << csv_number(cfg.trace.t_final) << "\n";
    out << "dt: " << csv_number(cfg.trace.dt) << "\n";
    out << "samples: " << cfg.trace.samples << "\n";
    out << "initial_div_sum: " << csv_number(report.initial_div_sum) << "\n";
    out << "\n";
    for (const DivergenceSeries& series : report.series) {
        double max_mean_dev = 0.0;
        double max_abs = 0.0;
        for (std::size_t k = 0; k < report.times.size(); ++k) {
            max_mean_dev = std::max(
                max_mean_dev,
                std::abs(series.mean_div_sum[k] - report.initial_div_sum));
            max_abs = std::max(max_abs, series.max_abs_div[k]);
        }
        out << "scheme=" << to_string(series.scheme)
            << " max_mean_deviation=" << csv_number(max_mean_dev)
            << " max_abs_div=" << csv_number(max_abs)
            << " used=" << series.samples_used
            << " excluded=" << series.samples_excluded << "\n";
    }
    return out.str();
}

void write_text_file(const std::string& dir, const std::string& filename,
                     const std::string& content) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path path = std::filesystem::path(dir) / filename;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() +
                                 "' for writing");
    }
    out << content;
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

}  // namespace stomax
