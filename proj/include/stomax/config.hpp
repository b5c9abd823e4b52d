#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stomax/experiments.hpp"

namespace stomax {

/// Subcommand a configuration is loaded for; selects which sections apply
/// and which model defaults seed the parse.
enum class RunKind { Convergence, Trace, Divergence, Check };

std::string to_string(RunKind kind);

/**
 * @brief Fully resolved run configuration.
 *
 * The grid and noise sections are shared by every run kind; the model
 * section seeds the sub-config matching the run kind. seed and threads are
 * mirrored into the sub-configs by sync_shared(), which load_config calls
 * after parsing; callers that mutate the shared fields afterwards (command
 * line flags) must call it again before validate().
 */
struct RunConfig {
    RunKind kind{RunKind::Convergence};
    GridSpec grid{};
    NoiseSpec noise{};
    ConvergenceConfig convergence{};
    TraceConfig trace{};
    std::string output_dir{"out"};
    std::uint64_t seed{6};
    int threads{1};

    void sync_shared();
    void validate() const;
};

/**
 * @brief Parse a JSON config document.
 *
 * Unknown keys anywhere in the document are rejected, naming the offending
 * dotted path. `overrides` holds `key=value` pairs with the same dotted
 * paths as the document; values are parsed as JSON when possible, with a
 * comma-separated fallback for arrays and a plain-string fallback otherwise.
 */
RunConfig load_config(RunKind kind, const std::string& json_text,
                      const std::vector<std::string>& overrides = {});

RunConfig load_config_file(RunKind kind, const std::string& path,
                           const std::vector<std::string>& overrides = {});

/// Resolved configuration serialized for the echo file next to the results.
std::string config_to_json(const RunConfig& cfg);

}  // namespace stomax
