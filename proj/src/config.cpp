#include "stomax/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace stomax {

namespace {

using nlohmann::json;

[[noreturn]] void fail_key(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config key '" + path + "' " + what);
}

void require_object(const json& value, const std::string& path) {
    if (!value.is_object()) fail_key(path, "must be a JSON object");
}

void require_known(const json& obj, const std::string& prefix,
                   std::initializer_list<const char*> keys) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : keys) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw std::invalid_argument("unknown config key '" + prefix +
                                        item.key() + "'");
        }
    }
}

void read_double(const json& obj, const char* key, const std::string& prefix,
                 double& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) fail_key(prefix + key, "must be a number");
    out = v.get<double>();
}

void read_int(const json& obj, const char* key, const std::string& prefix,
              int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail_key(prefix + key, "must be an integer");
    out = v.get<int>();
}

void read_uint64(const json& obj, const char* key, const std::string& prefix,
                 std::uint64_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        fail_key(prefix + key, "must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void read_string(const json& obj, const char* key, const std::string& prefix,
                 std::string& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) fail_key(prefix + key, "must be a string");
    out = v.get<std::string>();
}

void read_double_array(const json& obj, const char* key,
                       const std::string& prefix, std::vector<double>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (v.is_number()) {
        out = {v.get<double>()};
        return;
    }
    if (!v.is_array()) fail_key(prefix + key, "must be an array of numbers");
    std::vector<double> values;
    for (const json& entry : v) {
        if (!entry.is_number()) {
            fail_key(prefix + key, "must be an array of numbers");
        }
        values.push_back(entry.get<double>());
    }
    out = std::move(values);
}

template <typename Enum, typename Parser>
void read_enum(const json& obj, const char* key, const std::string& prefix,
               Parser parse, Enum& out) {
    if (!obj.contains(key)) return;
    std::string name;
    read_string(obj, key, prefix, name);
    try {
        out = parse(name);
    } catch (const std::invalid_argument& e) {
        fail_key(prefix + key, std::string("is invalid: ") + e.what());
    }
}

void parse_grid(const json& doc, GridSpec& grid) {
    if (!doc.contains("grid")) return;
    const json& g = doc.at("grid");
    require_object(g, "grid");
    require_known(g, "grid.", {"n_cells", "epsilon", "mu", "kappa"});
    read_int(g, "n_cells", "grid.", grid.n_cells);
    read_double(g, "epsilon", "grid.", grid.epsilon);
    read_double(g, "mu", "grid.", grid.mu);
    read_double(g, "kappa", "grid.", grid.kappa);
    if (grid.n_cells > 0) {
        grid.dx = 1.0 / grid.n_cells;
        grid.dy = 1.0 / grid.n_cells;
    }
}

void parse_noise(const json& doc, NoiseSpec& noise) {
    if (!doc.contains("noise")) return;
    const json& n = doc.at("noise");
    require_object(n, "noise");
    require_known(n, "noise.", {"max_mode", "eta_threshold"});
    read_int(n, "max_mode", "noise.", noise.max_mode);
    read_double(n, "eta_threshold", "noise.", noise.eta_threshold);
}

void parse_model(const json& doc, ModelSpec& model) {
    if (!doc.contains("model")) return;
    const json& m = doc.at("model");
    require_object(m, "model");
    require_known(m, "model.", {"drift", "diffusion", "lambda_e", "lambda_h"});
    read_enum(m, "drift", "model.", drift_from_name, model.drift);
    read_enum(m, "diffusion", "model.", diffusion_from_name, model.diffusion);
    read_double(m, "lambda_e", "model.", model.lambda_e);
    read_double(m, "lambda_h", "model.", model.lambda_h);
}

void parse_convergence(const json& doc, ConvergenceConfig& cfg) {
    if (!doc.contains("convergence")) return;
    const json& c = doc.at("convergence");
    require_object(c, "convergence");
    require_known(c, "convergence.",
                  {"t_final", "dt_levels", "dt_ref", "samples", "scheme",
                   "error_metric"});
    read_double(c, "t_final", "convergence.", cfg.t_final);
    read_double_array(c, "dt_levels", "convergence.", cfg.dt_levels);
    read_double(c, "dt_ref", "convergence.", cfg.dt_ref);
    read_int(c, "samples", "convergence.", cfg.samples);
    read_enum(c, "scheme", "convergence.", scheme_from_name, cfg.scheme);
    read_enum(c, "error_metric", "convergence.", error_metric_from_name,
              cfg.metric);
}

void parse_trace(const json& doc, TraceConfig& cfg) {
    if (!doc.contains("trace")) return;
    const json& t = doc.at("trace");
    require_object(t, "trace");
    require_known(t, "trace.", {"t_final", "dt", "samples", "schemes"});
    read_double(t, "t_final", "trace.", cfg.t_final);
    read_double(t, "dt", "trace.", cfg.dt);
    read_int(t, "samples", "trace.", cfg.samples);
    if (t.contains("schemes")) {
        const json& s = t.at("schemes");
        const json list = s.is_string() ? json::array({s}) : s;
        if (!list.is_array()) {
            fail_key("trace.schemes", "must be an array of scheme names");
        }
        std::vector<SchemeKind> schemes;
        for (const json& entry : list) {
            if (!entry.is_string()) {
                fail_key("trace.schemes", "must be an array of scheme names");
            }
            try {
                schemes.push_back(scheme_from_name(entry.get<std::string>()));
            } catch (const std::invalid_argument& e) {
                fail_key("trace.schemes", std::string("is invalid: ") + e.what());
            }
        }
        cfg.schemes = std::move(schemes);
    }
}

json parse_override_value(const std::string& text) {
    json value = json::parse(text, nullptr, false);
    if (!value.is_discarded()) return value;
    if (text.find(',') != std::string::npos) {
        json arr = json::array();
        std::stringstream stream(text);
        std::string piece;
        while (std::getline(stream, piece, ',')) {
            json parsed = json::parse(piece, nullptr, false);
            arr.push_back(parsed.is_discarded() ? json(piece) : parsed);
        }
        return arr;
    }
    return json(text);
}

void apply_override(json& doc, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("override '" + spec +
                                    "' must have the form key=value");
    }
    const std::string path = spec.substr(0, eq);
    json value = parse_override_value(spec.substr(eq + 1));
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part =
            dot == std::string::npos ? path.substr(start)
                                     : path.substr(start, dot - start);
        if (part.empty()) {
            throw std::invalid_argument("override '" + spec +
                                        "' has an empty path segment");
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null()) {
            fail_key(path.substr(0, dot), "is not a section; cannot descend into it");
        }
        start = dot + 1;
    }
}

json enum_json(const std::string& s) { return json(s); }

}  // namespace

std::string to_string(RunKind kind) {
    switch (kind) {
        case RunKind::Convergence: return "convergence";
        case RunKind::Trace: return "trace";
        case RunKind::Divergence: return "divergence";
        case RunKind::Check: return "check";
    }
    throw std::invalid_argument("unknown run kind");
}

void RunConfig::sync_shared() {
    convergence.grid = grid;
    convergence.noise = noise;
    convergence.master_seed = seed;
    convergence.threads = threads;
    trace.grid = grid;
    trace.noise = noise;
    trace.master_seed = seed;
    trace.threads = threads;
}

void RunConfig::validate() const {
    if (output_dir.empty()) {
        throw std::invalid_argument("output_dir must not be empty");
    }
    if (threads < 1) {
        throw std::invalid_argument("threads must be at least 1");
    }
    switch (kind) {
        case RunKind::Convergence:
            convergence.validate();
            break;
        case RunKind::Trace:
        case RunKind::Divergence:
            trace.validate();
            break;
        case RunKind::Check:
            grid.validate();
            noise.validate();
            break;
    }
}

RunConfig load_config(RunKind kind, const std::string& json_text,
                      const std::vector<std::string>& overrides) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) {
        throw std::invalid_argument("config is not valid JSON");
    }
    if (!doc.is_object()) {
        throw std::invalid_argument("config root must be a JSON object");
    }
    for (const std::string& spec : overrides) {
        apply_override(doc, spec);
    }
    // "command" appears in echoed resolved configs; accept it so an echo can
    // be fed back in directly.
    require_known(doc, "",
                  {"grid", "noise", "model", "convergence", "trace", "seed",
                   "threads", "output_dir", "command"});
    if (doc.contains("command") && !doc.at("command").is_string()) {
        fail_key("command", "must be a string");
    }

    RunConfig cfg;
    cfg.kind = kind;
    parse_grid(doc, cfg.grid);
    parse_noise(doc, cfg.noise);
    if (kind == RunKind::Convergence) {
        parse_model(doc, cfg.convergence.model);
    } else {
        parse_model(doc, cfg.trace.model);
    }
    parse_convergence(doc, cfg.convergence);
    parse_trace(doc, cfg.trace);
    read_uint64(doc, "seed", "", cfg.seed);
    read_int(doc, "threads", "", cfg.threads);
    read_string(doc, "output_dir", "", cfg.output_dir);
    cfg.sync_shared();
    return cfg;
}

RunConfig load_config_file(RunKind kind, const std::string& path,
                           const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_config(kind, buffer.str(), overrides);
}

std::string config_to_json(const RunConfig& cfg) {
    json doc;
    doc["command"] = to_string(cfg.kind);
    doc["grid"] = {{"n_cells", cfg.grid.n_cells},
                   {"epsilon", cfg.grid.epsilon},
                   {"mu", cfg.grid.mu},
                   {"kappa", cfg.grid.kappa}};
    doc["noise"] = {{"max_mode", cfg.noise.resolved_max_mode(cfg.grid)},
                    {"eta_threshold", cfg.noise.eta_threshold}};
    const bool uses_trace =
        cfg.kind == RunKind::Trace || cfg.kind == RunKind::Divergence;
    if (cfg.kind == RunKind::Convergence) {
        const ModelSpec& m = cfg.convergence.model;
        doc["model"] = {{"drift", enum_json(to_string(m.drift))},
                        {"diffusion", enum_json(to_string(m.diffusion))},
                        {"lambda_e", m.lambda_e},
                        {"lambda_h", m.lambda_h}};
        doc["convergence"] = {
            {"t_final", cfg.convergence.t_final},
            {"dt_levels", cfg.convergence.dt_levels},
            {"dt_ref", cfg.convergence.dt_ref},
            {"samples", cfg.convergence.samples},
            {"scheme", enum_json(to_string(cfg.convergence.scheme))},
            {"error_metric", enum_json(to_string(cfg.convergence.metric))}};
    } else if (uses_trace) {
        const ModelSpec& m = cfg.trace.model;
        doc["model"] = {{"drift", enum_json(to_string(m.drift))},
                        {"diffusion", enum_json(to_string(m.diffusion))},
                        {"lambda_e", m.lambda_e},
                        {"lambda_h", m.lambda_h}};
        json schemes = json::array();
        for (SchemeKind s : cfg.trace.schemes) schemes.push_back(to_string(s));
        doc["trace"] = {{"t_final", cfg.trace.t_final},
                        {"dt", cfg.trace.dt},
                        {"samples", cfg.trace.samples},
                        {"schemes", schemes}};
    }
    doc["seed"] = cfg.seed;
    doc["threads"] = cfg.threads;
    doc["output_dir"] = cfg.output_dir;
    return doc.dump(2) + "\n";
}

}  // namespace stomax
