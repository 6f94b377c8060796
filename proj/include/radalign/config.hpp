#pragma once

#include "radalign/common.hpp"
#include "radalign/datagen.hpp"
#include "radalign/encoders.hpp"
#include "radalign/io.hpp"
#include "radalign/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace radalign {

// Operator-facing configuration; every field has a default so a bare
// `train` reproduces the known defaults (14 criteria, k = 7, 40 epochs,
// tau = 0.07).
struct RunConfig {
    struct Paths {
        std::string criteria;
        std::string dataset;
        std::string checkpoint;
        std::string index;
        std::string template_file;
    } paths;

    struct Llm {
        std::string client = "mock";  // "mock" (echo) or "http"
        std::string endpoint;         // overrides RADALIGN_LLM_ENDPOINT
        std::string model;            // overrides RADALIGN_LLM_MODEL
        int max_retries = 3;
        int backoff_base_ms = 250;
        int max_in_flight = 4;
        double temperature = 0.0;
    } llm;

    TrainConfig train;
    EncoderSpec encoder;
    SynthSpec synth;
    int retrieval_k = 7;
    int n_criteria = 14;
};

namespace detail {

template <typename T>
T field_as(const nlohmann::json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(path, "wrong type");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, const std::string& prefix, T& out) {
    if (!j.contains(key)) return;
    out = field_as<T>(j.at(key), prefix.empty() ? key : prefix + "." + key);
}

inline void expect_object(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
}

}  // namespace detail

inline void parse_synth_spec(const nlohmann::json& js, const std::string& prefix,
                             SynthSpec& out) {
    detail::expect_object(js, prefix);
    detail::read_field(js, "n_examples", prefix, out.n_examples);
    detail::read_field(js, "H", prefix, out.H);
    detail::read_field(js, "W", prefix, out.W);
    detail::read_field(js, "noise_std", prefix, out.noise_std);
    detail::read_field(js, "seed", prefix, out.seed);
    detail::read_field(js, "prevalence", prefix, out.prevalence);
    detail::read_field(js, "co_occurrence", prefix, out.co_occurrence);
    detail::read_field(js, "min_labels", prefix, out.min_labels);
    detail::read_field(js, "signature_size", prefix, out.signature_size);
    detail::read_field(js, "signature_amplitude", prefix, out.signature_amplitude);
    try {
        out.validate();
    } catch (const PreconditionError& e) {
        throw SchemaError(prefix, e.what());
    }
}

inline SynthSpec load_synth_spec(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("(root)", "spec is not valid JSON: " + std::string(e.what()));
    }
    SynthSpec spec;
    parse_synth_spec(j, "(root)", spec);
    return spec;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using detail::expect_object;
    using detail::read_field;
    expect_object(j, "(root)");
    RunConfig cfg;

    if (j.contains("paths")) {
        const auto& jp = j.at("paths");
        expect_object(jp, "paths");
        read_field(jp, "criteria", "paths", cfg.paths.criteria);
        read_field(jp, "dataset", "paths", cfg.paths.dataset);
        read_field(jp, "checkpoint", "paths", cfg.paths.checkpoint);
        read_field(jp, "index", "paths", cfg.paths.index);
        read_field(jp, "template", "paths", cfg.paths.template_file);
    }

    if (j.contains("llm")) {
        const auto& jl = j.at("llm");
        expect_object(jl, "llm");
        read_field(jl, "client", "llm", cfg.llm.client);
        read_field(jl, "endpoint", "llm", cfg.llm.endpoint);
        read_field(jl, "model", "llm", cfg.llm.model);
        read_field(jl, "max_retries", "llm", cfg.llm.max_retries);
        read_field(jl, "backoff_base_ms", "llm", cfg.llm.backoff_base_ms);
        read_field(jl, "max_in_flight", "llm", cfg.llm.max_in_flight);
        read_field(jl, "temperature", "llm", cfg.llm.temperature);
        if (cfg.llm.client != "mock" && cfg.llm.client != "http")
            throw SchemaError("llm.client", "must be 'mock' or 'http'");
    }

    if (j.contains("train")) {
        const auto& jt = j.at("train");
        expect_object(jt, "train");
        read_field(jt, "epochs", "train", cfg.train.epochs);
        read_field(jt, "lr_initial", "train", cfg.train.lr_initial);
        read_field(jt, "lr_final", "train", cfg.train.lr_final);
        read_field(jt, "lr_switch_epoch", "train", cfg.train.lr_switch_epoch);
        read_field(jt, "weight_decay", "train", cfg.train.weight_decay);
        read_field(jt, "tau", "train", cfg.train.tau);
        read_field(jt, "seed", "train", cfg.train.seed);
        read_field(jt, "batch_size", "train", cfg.train.batch_size);
        read_field(jt, "use_bias", "train", cfg.train.use_bias);
        if (jt.contains("task_mode")) {
            auto mode = detail::field_as<std::string>(jt.at("task_mode"), "train.task_mode");
            if (mode == "multi_label") cfg.train.task_mode = TaskMode::MultiLabel;
            else if (mode == "single_label") cfg.train.task_mode = TaskMode::SingleLabel;
            else throw SchemaError("train.task_mode", "must be 'multi_label' or 'single_label'");
        }
        try {
            cfg.train.validate();
        } catch (const PreconditionError& e) {
            throw SchemaError("train", e.what());
        }
    }

    if (j.contains("encoder")) {
        const auto& je = j.at("encoder");
        expect_object(je, "encoder");
        read_field(je, "d", "encoder", cfg.encoder.d);
        read_field(je, "d_v", "encoder", cfg.encoder.d_v);
        read_field(je, "patch", "encoder", cfg.encoder.patch);
        read_field(je, "image_h", "encoder", cfg.encoder.image_h);
        read_field(je, "image_w", "encoder", cfg.encoder.image_w);
        read_field(je, "seed", "encoder", cfg.encoder.seed);
        try {
            cfg.encoder.validate();
        } catch (const PreconditionError& e) {
            throw SchemaError("encoder", e.what());
        }
    }

    if (j.contains("synth")) parse_synth_spec(j.at("synth"), "synth", cfg.synth);

    detail::read_field(j, "retrieval_k", "", cfg.retrieval_k);
    if (cfg.retrieval_k < 1) throw SchemaError("retrieval_k", "must be >= 1");
    detail::read_field(j, "n_criteria", "", cfg.n_criteria);
    if (cfg.n_criteria < 1) throw SchemaError("n_criteria", "must be >= 1");
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("(root)", "config is not valid JSON: " + std::string(e.what()));
    }
    return run_config_from_json(j);
}

}  // namespace radalign
