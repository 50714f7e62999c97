#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "peft/errors.hpp"
#include "peft/tensor_io.hpp"
#include "peft/trainer.hpp"

namespace peft {

namespace detail {

inline std::uint64_t config_uint(const nlohmann::json& j, const char* key,
                                 std::uint64_t fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
        throw ConfigError(std::string("config.") + key + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

inline float config_float(const nlohmann::json& j, const char* key, float fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number()) {
        throw ConfigError(std::string("config.") + key + ": expected a number");
    }
    return static_cast<float>(v.get<double>());
}

inline bool config_bool(const nlohmann::json& j, const char* key, bool fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_boolean()) {
        throw ConfigError(std::string("config.") + key + ": expected a boolean");
    }
    return v.get<bool>();
}

inline std::string config_string(const nlohmann::json& j, const char* key,
                                 const std::string& fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_string()) {
        throw ConfigError(std::string("config.") + key + ": expected a string");
    }
    return v.get<std::string>();
}

} // namespace detail

/// Strict RunConfig parser: unknown fields, wrong types, bad enum values,
/// and semantic violations all raise ConfigError naming the field path.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("config: expected a JSON object");
    }
    static const char* known[] = {
        "seed",       "d_model",      "d_k",        "seq_len",    "n_examples",
        "batch_size", "steps",        "eta",        "adapter",    "targets",
        "rank",       "sigma",        "gamma",      "b_init",     "b_final",
        "warmup_steps", "quant",      "quant_mode", "block_size", "double_quant",
        "super_block", "train_head"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("config." + item.key() + ": unknown field");
        }
    }

    RunConfig cfg;
    cfg.seed = detail::config_uint(j, "seed", cfg.seed);
    cfg.d_model = detail::config_uint(j, "d_model", cfg.d_model);
    cfg.d_k = detail::config_uint(j, "d_k", cfg.d_k);
    cfg.seq_len = detail::config_uint(j, "seq_len", cfg.seq_len);
    cfg.n_examples = detail::config_uint(j, "n_examples", cfg.n_examples);
    cfg.batch_size = detail::config_uint(j, "batch_size", cfg.batch_size);
    cfg.steps = detail::config_uint(j, "steps", cfg.steps);
    cfg.eta = detail::config_float(j, "eta", cfg.eta);

    const std::string adapter = detail::config_string(j, "adapter", "none");
    if (adapter == "none") {
        cfg.adapter = AdapterKind::none;
    } else if (adapter == "lora") {
        cfg.adapter = AdapterKind::lora;
    } else if (adapter == "adalora") {
        cfg.adapter = AdapterKind::adalora;
    } else {
        throw ConfigError("config.adapter: expected one of none, lora, adalora");
    }

    if (j.contains("targets")) {
        const auto& v = j.at("targets");
        if (!v.is_array()) {
            throw ConfigError("config.targets: expected an array of strings");
        }
        cfg.targets.clear();
        for (const auto& t : v) {
            if (!t.is_string()) {
                throw ConfigError("config.targets: expected an array of strings");
            }
            cfg.targets.push_back(t.get<std::string>());
        }
    }

    cfg.rank = detail::config_uint(j, "rank", cfg.rank);
    cfg.sigma = detail::config_float(j, "sigma", cfg.sigma);
    cfg.gamma = detail::config_float(j, "gamma", cfg.gamma);
    cfg.b_init = detail::config_uint(j, "b_init", cfg.b_init);
    cfg.b_final = detail::config_uint(j, "b_final", cfg.b_final);
    cfg.warmup_steps = detail::config_uint(j, "warmup_steps", cfg.warmup_steps);

    const std::string quant = detail::config_string(j, "quant", "none");
    if (quant == "none") {
        cfg.quant = QuantKind::none;
    } else if (quant == "int8") {
        cfg.quant = QuantKind::int8;
    } else if (quant == "int4") {
        cfg.quant = QuantKind::int4;
    } else if (quant == "nf4") {
        cfg.quant = QuantKind::nf4;
    } else {
        throw ConfigError("config.quant: expected one of none, int8, int4, nf4");
    }

    if (j.contains("quant_mode")) {
        cfg.quant_mode_explicit = true;
        const std::string mode = detail::config_string(j, "quant_mode", "symmetric");
        if (mode == "symmetric") {
            cfg.quant_mode = QuantMode::symmetric;
        } else if (mode == "asymmetric") {
            cfg.quant_mode = QuantMode::asymmetric;
        } else {
            throw ConfigError("config.quant_mode: expected symmetric or asymmetric");
        }
    }

    cfg.block_size = detail::config_uint(j, "block_size", cfg.block_size);
    cfg.double_quant = detail::config_bool(j, "double_quant", cfg.double_quant);
    cfg.super_block = detail::config_uint(j, "super_block", cfg.super_block);
    cfg.train_head = detail::config_bool(j, "train_head", cfg.train_head);

    validate_config(cfg);
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    auto in = io::open_input(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }
    return parse_run_config(j);
}

} // namespace peft
