#pragma once

#include <string>

#include "stomax/config.hpp"
#include "stomax/experiments.hpp"

namespace stomax {

/// Shortest decimal form of x that parses back to the same double.
std::string csv_number(double x);

// CSV renderings of the run reports. ASCII, '.' decimal separator, LF line
// endings, one header row.
std::string convergence_csv(const ConvergenceReport& report);
std::string trace_csv(const TraceReport& report);
std::string divergence_csv(const DivergenceReport& report);

// Human-readable run summaries; deterministic, so repeated runs with the
// same configuration produce identical files.
std::string convergence_summary(const RunConfig& cfg,
                                const ConvergenceReport& report);
std::string trace_summary(const RunConfig& cfg, const TraceReport& report);
std::string divergence_summary(const RunConfig& cfg,
                               const DivergenceReport& report);

/// Create the directory (parents included) and write the file with LF
/// endings exactly as given.
void write_text_file(const std::string& dir, const std::string& filename,
                     const std::string& content);

}  // namespace stomax
