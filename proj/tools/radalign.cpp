// Command-line front end: mine criteria, generate synthetic data, train,
// build the report index, run inference, draft reports, evaluate, and
// export attention heatmaps.

#include "radalign/radalign.hpp"
#include "radalign/http_llm_client.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace radalign;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMissingFile = 2;
constexpr int kExitSchema = 3;
constexpr int kExitLlm = 4;

void emit_error(const std::string& kind, const std::string& detail) {
    nlohmann::ordered_json j;
    j["error"]["kind"] = kind;
    j["error"]["detail"] = detail;
    std::cerr << j.dump() << "\n";
}

void require_input(const std::string& path, const std::string& what) {
    if (path.empty()) throw PreconditionError(what + " path is empty");
    if (!fs::exists(path)) throw FileError(path, "missing " + what);
}

void refuse_overwrite(const fs::path& path, bool force) {
    if (!force && fs::exists(path))
        throw Error("refusing to overwrite existing '" + path.string() +
                    "' (pass --force to allow)");
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    require_input(path, "config file");
    return load_run_config(path);
}

std::unique_ptr<LLMClient> make_client(const RunConfig::Llm& llm) {
    if (llm.client == "mock") return std::make_unique<EchoLLMClient>();
    HttpLLMClient::Config cfg;
    if (const char* e = std::getenv("RADALIGN_LLM_ENDPOINT")) cfg.endpoint = e;
    if (const char* k = std::getenv("RADALIGN_LLM_API_KEY")) cfg.api_key = k;
    if (const char* m = std::getenv("RADALIGN_LLM_MODEL")) cfg.model = m;
    if (!llm.endpoint.empty()) cfg.endpoint = llm.endpoint;
    if (!llm.model.empty()) cfg.model = llm.model;
    if (cfg.endpoint.empty())
        throw PreconditionError("http client selected but no endpoint configured "
                                "(set RADALIGN_LLM_ENDPOINT or llm.endpoint)");
    return std::make_unique<HttpLLMClient>(std::move(cfg));
}

std::vector<std::string> read_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileError(path, "cannot open corpus");
    std::vector<std::string> corpus;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) corpus.push_back(line);
    return corpus;
}

struct CommonArgs {
    std::string config;
    bool force = false;
};

int run(int argc, char** argv) {
    CLI::App app{"RadAlign: concept-aligned chest X-ray classification, retrieval and "
                 "report drafting"};
    app.require_subcommand(1);
    CommonArgs common;

    // ---- mine -----------------------------------------------------------
    auto* mine = app.add_subcommand("mine", "Derive diagnostic criteria from a report corpus");
    std::string mine_corpus, mine_out, mine_log;
    std::string mine_fixture = std::string(RADALIGN_DATA_DIR) + "/criteria_chestxray14.json";
    int mine_n = 14;
    std::string mine_llm = "mock";
    mine->add_option("--corpus", mine_corpus, "text file, one report per line")->required();
    mine->add_option("--out", mine_out, "output criteria JSON")->required();
    mine->add_option("--n-criteria", mine_n, "number of criteria to mine");
    mine->add_option("--llm", mine_llm, "'mock' (replays the bundled fixture) or 'http'");
    mine->add_option("--mock-fixture", mine_fixture, "criteria file the mock replays");
    mine->add_option("--log", mine_log, "write the two LLM turns verbatim to this file");
    mine->add_flag("--force", common.force, "overwrite outputs");

    // ---- gen ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "Generate a synthetic planted-concept dataset");
    std::string gen_criteria, gen_out, gen_spec;
    gen->add_option("--criteria", gen_criteria, "criteria JSON")->required();
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--spec", gen_spec, "SynthSpec JSON file");
    gen->add_option("--config", common.config, "RunConfig JSON (synth section)");
    std::optional<int> gen_n, gen_min_labels;
    std::optional<double> gen_noise;
    std::optional<uint64_t> gen_seed;
    gen->add_option("--n", gen_n, "number of examples");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--noise-std", gen_noise, "pixel noise sigma");
    gen->add_option("--min-labels", gen_min_labels, "resample until this many labels");
    gen->add_flag("--force", common.force, "overwrite outputs");

    // ---- train ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train the alignment model");
    std::string train_data, train_criteria, train_out, train_trace;
    std::optional<int> train_epochs;
    std::optional<uint64_t> train_seed;
    train_cmd->add_option("--config", common.config, "RunConfig JSON (train/encoder sections)");
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--criteria", train_criteria, "criteria JSON")->required();
    train_cmd->add_option("--out", train_out, "output checkpoint")->required();
    train_cmd->add_option("--trace", train_trace, "loss trace CSV (default: <out>.trace.csv)");
    train_cmd->add_option("--epochs", train_epochs, "override epochs");
    train_cmd->add_option("--seed", train_seed, "override seed");
    train_cmd->add_flag("--force", common.force, "overwrite outputs");

    // ---- index ----------------------------------------------------------
    auto* index_cmd = app.add_subcommand("index", "Build the report retrieval index");
    std::string idx_ckpt, idx_data, idx_criteria, idx_out;
    index_cmd->add_option("--checkpoint", idx_ckpt, "trained checkpoint")->required();
    index_cmd->add_option("--data", idx_data, "dataset directory")->required();
    index_cmd->add_option("--criteria", idx_criteria, "criteria JSON")->required();
    index_cmd->add_option("--out", idx_out, "output index file")->required();
    index_cmd->add_flag("--force", common.force, "overwrite outputs");

    // ---- infer ----------------------------------------------------------
    auto* infer_cmd = app.add_subcommand("infer", "Classify one image and print findings");
    std::string inf_ckpt, inf_criteria, inf_image;
    infer_cmd->add_option("--checkpoint", inf_ckpt, "trained checkpoint")->required();
    infer_cmd->add_option("--criteria", inf_criteria, "criteria JSON")->required();
    infer_cmd->add_option("--image", inf_image, "RIMG image file")->required();

    // ---- report ---------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "Draft a report with the knowledge-guided prompt");
    std::string rep_ckpt, rep_criteria, rep_index, rep_image, rep_template, rep_out;
    std::optional<std::string> rep_llm;
    int rep_k = 7;
    report_cmd->add_option("--checkpoint", rep_ckpt, "trained checkpoint")->required();
    report_cmd->add_option("--criteria", rep_criteria, "criteria JSON")->required();
    report_cmd->add_option("--index", rep_index, "report index file")->required();
    report_cmd->add_option("--image", rep_image, "RIMG image file")->required();
    report_cmd->add_option("--template", rep_template, "prompt template file")->required();
    report_cmd->add_option("--llm", rep_llm, "'mock' or 'http'");
    report_cmd->add_option("--k", rep_k, "similar cases to retrieve");
    report_cmd->add_option("--out", rep_out, "write draft JSON here instead of stdout");
    report_cmd->add_option("--config", common.config, "RunConfig JSON (llm section)");
    report_cmd->add_flag("--force", common.force, "overwrite outputs");

    // ---- eval -----------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate per-class F1/AUC on a dataset");
    std::string ev_ckpt, ev_criteria, ev_data, ev_out;
    eval_cmd->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--criteria", ev_criteria, "criteria JSON")->required();
    eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
    eval_cmd->add_option("--out", ev_out, "write EvalResult JSON here");
    eval_cmd->add_flag("--force", common.force, "overwrite outputs");

    // ---- attn -----------------------------------------------------------
    auto* attn_cmd = app.add_subcommand("attn", "Export per-token attention heatmaps");
    std::string at_ckpt, at_criteria, at_image, at_outdir;
    attn_cmd->add_option("--checkpoint", at_ckpt, "trained checkpoint")->required();
    attn_cmd->add_option("--criteria", at_criteria, "criteria JSON")->required();
    attn_cmd->add_option("--image", at_image, "RIMG image file")->required();
    attn_cmd->add_option("--out-dir", at_outdir, "output directory")->required();
    attn_cmd->add_flag("--force", common.force, "overwrite outputs");

    CLI11_PARSE(app, argc, argv);

    if (mine->parsed()) {
        require_input(mine_corpus, "corpus file");
        refuse_overwrite(mine_out, common.force);
        if (!mine_log.empty()) refuse_overwrite(mine_log, common.force);
        auto corpus = read_corpus(mine_corpus);
        std::unique_ptr<LLMClient> client;
        if (mine_llm == "mock") {
            require_input(mine_fixture, "mock fixture");
            auto fixture = load_criteria(mine_fixture);
            if (fixture.num_criteria() < mine_n)
                throw PreconditionError("mock fixture has only " +
                                        std::to_string(fixture.num_criteria()) + " criteria");
            client = std::make_unique<ScriptedLLMClient>(
                scripted_mining_replies(fixture, mine_n));
        } else {
            RunConfig cfg;
            cfg.llm.client = "http";
            client = make_client(cfg.llm);
        }
        MiningTranscript transcript;
        CriterionSet cs = mine_criteria(corpus, *client, mine_n, default_chest_labels(),
                                        &transcript);
        save_criteria(cs, mine_out);
        if (!mine_log.empty()) {
            io::atomic_write(mine_log, [&](std::ostream& os) {
                for (size_t i = 0; i < transcript.turns.size(); ++i) {
                    os << "=== turn " << (i + 1) << " prompt ===\n"
                       << transcript.turns[i].prompt << "\n=== turn " << (i + 1)
                       << " response ===\n"
                       << transcript.turns[i].response << "\n";
                }
            });
        }
        std::cout << "mined " << cs.num_criteria() << " criteria -> " << mine_out << "\n";
        return 0;
    }

    if (gen->parsed()) {
        require_input(gen_criteria, "criteria file");
        RunConfig cfg = load_config_or_default(common.config);
        if (!gen_spec.empty()) {
            require_input(gen_spec, "spec file");
            cfg.synth = load_synth_spec(gen_spec);
        }
        if (gen_n) cfg.synth.n_examples = *gen_n;
        if (gen_seed) cfg.synth.seed = *gen_seed;
        if (gen_noise) cfg.synth.noise_std = *gen_noise;
        if (gen_min_labels) cfg.synth.min_labels = *gen_min_labels;
        refuse_overwrite(fs::path(gen_out) / "manifest.json", common.force);
        auto criteria = load_criteria(gen_criteria);
        auto examples = generate(cfg.synth, criteria);
        save_dataset(examples, gen_out);
        std::cout << "wrote " << examples.size() << " examples -> " << gen_out << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        require_input(train_data, "dataset");
        require_input(train_criteria, "criteria file");
        RunConfig cfg = load_config_or_default(common.config);
        if (train_epochs) cfg.train.epochs = *train_epochs;
        if (train_seed) cfg.train.seed = *train_seed;
        if (train_trace.empty()) train_trace = train_out + ".trace.csv";
        refuse_overwrite(train_out, common.force);
        refuse_overwrite(train_trace, common.force);

        auto criteria = load_criteria(train_criteria);
        auto dataset = load_dataset(train_data);
        if (!dataset.empty()) {
            cfg.encoder.image_h = static_cast<int>(dataset.front().image.rows());
            cfg.encoder.image_w = static_cast<int>(dataset.front().image.cols());
        }
        AlignModel model = AlignModel::init(cfg.encoder, criteria, cfg.train.task_mode,
                                            cfg.train.tau, cfg.train.use_bias, cfg.train.seed);
        TrainTrace trace = train(model, dataset, criteria, cfg.train);
        save_checkpoint(model, train_out);
        write_trace_csv(trace, train_trace);
        std::cout << "trained " << cfg.train.epochs << " epochs: total loss "
                  << trace.initial_total() << " -> " << trace.final_total() << "\n"
                  << "checkpoint -> " << train_out << "\ntrace -> " << train_trace << "\n";
        return 0;
    }

    if (index_cmd->parsed()) {
        require_input(idx_ckpt, "checkpoint");
        require_input(idx_data, "dataset");
        require_input(idx_criteria, "criteria file");
        refuse_overwrite(idx_out, common.force);
        auto criteria = load_criteria(idx_criteria);
        AlignModel model = load_checkpoint(idx_ckpt, criteria);
        auto dataset = load_dataset(idx_data);
        ReportIndex index = build_index(model, dataset);
        save_index(index, idx_out);
        std::cout << "indexed " << index.entries.size() << " reports -> " << idx_out << "\n";
        return 0;
    }

    if (infer_cmd->parsed()) {
        require_input(inf_ckpt, "checkpoint");
        require_input(inf_criteria, "criteria file");
        require_input(inf_image, "image");
        auto criteria = load_criteria(inf_criteria);
        AlignModel model = load_checkpoint(inf_ckpt, criteria);
        Matrix image = load_image(inf_image);
        InferenceResult r = infer(model, image, fs::path(inf_image).stem().string());
        nlohmann::ordered_json j;
        j["image"] = inf_image;
        j["scores"] = nlohmann::ordered_json::array();
        for (int c = 0; c < model.N(); ++c) {
            j["scores"].push_back({{"label", criteria.labels[static_cast<size_t>(c)].code},
                                   {"score", r.scores(c)}});
        }
        j["findings"] = nlohmann::ordered_json::array();
        for (const auto& f : r.findings) {
            j["findings"].push_back({{"criterion", f.criterion_name},
                                     {"text", f.text},
                                     {"similarity", f.similarity}});
        }
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    if (report_cmd->parsed()) {
        require_input(rep_ckpt, "checkpoint");
        require_input(rep_criteria, "criteria file");
        require_input(rep_index, "index");
        require_input(rep_image, "image");
        require_input(rep_template, "template");
        if (!rep_out.empty()) refuse_overwrite(rep_out, common.force);
        RunConfig cfg = load_config_or_default(common.config);
        if (rep_llm) cfg.llm.client = *rep_llm;
        if (cfg.llm.client != "mock" && cfg.llm.client != "http")
            throw SchemaError("llm.client", "must be 'mock' or 'http'");

        auto criteria = load_criteria(rep_criteria);
        AlignModel model = load_checkpoint(rep_ckpt, criteria);
        LoadedIndex loaded = load_index(rep_index, model.fingerprint);
        if (loaded.fingerprint_warning)
            std::cerr << "warning: " << *loaded.fingerprint_warning << "\n";
        Matrix image = load_image(rep_image);
        InferenceResult inference = infer(model, image, fs::path(rep_image).stem().string());
        auto hits = query_topk(loaded.index, inference.attended.z_hat, rep_k);
        PromptTemplate tmpl = load_template(rep_template);
        PromptBundle bundle = make_bundle(model, inference, hits, tmpl.id);

        auto client = make_client(cfg.llm);
        GenerateOptions gopts;
        gopts.max_retries = cfg.llm.max_retries;
        gopts.backoff_base_ms = cfg.llm.backoff_base_ms;
        gopts.params.temperature = cfg.llm.temperature;
        ReportDraft draft = generate_report(bundle, tmpl, *client, gopts);

        // Latency and retry counts are volatile and deliberately left out so
        // the artifact is byte-reproducible.
        nlohmann::ordered_json j;
        j["image"] = rep_image;
        j["client"] = draft.client_name;
        j["template_id"] = draft.template_id;
        j["finding_agreement"] = finding_agreement(draft.text, inference.findings);
        j["prompt"] = draft.prompt;
        j["text"] = draft.text;
        std::string payload = j.dump(2) + "\n";
        if (rep_out.empty()) {
            std::cout << payload;
        } else {
            io::atomic_write(rep_out, [&](std::ostream& os) { os << payload; });
            std::cout << "report -> " << rep_out << "\n";
        }
        return 0;
    }

    if (eval_cmd->parsed()) {
        require_input(ev_ckpt, "checkpoint");
        require_input(ev_criteria, "criteria file");
        require_input(ev_data, "dataset");
        if (!ev_out.empty()) refuse_overwrite(ev_out, common.force);
        auto criteria = load_criteria(ev_criteria);
        AlignModel model = load_checkpoint(ev_ckpt, criteria);
        auto dataset = load_dataset(ev_data);
        EvalResult res = evaluate(model, dataset);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << format_eval_grid(res);
        if (!ev_out.empty())
            io::atomic_write(ev_out,
                             [&](std::ostream& os) { os << eval_to_json(res).dump(2) << "\n"; });
        return 0;
    }

    if (attn_cmd->parsed()) {
        require_input(at_ckpt, "checkpoint");
        require_input(at_criteria, "criteria file");
        require_input(at_image, "image");
        refuse_overwrite(fs::path(at_outdir) / "attention_weights.json", common.force);
        auto criteria = load_criteria(at_criteria);
        AlignModel model = load_checkpoint(at_ckpt, criteria);
        Matrix image = load_image(at_image);
        InferenceResult r = infer(model, image, fs::path(at_image).stem().string());
        auto exported = export_attention_heatmaps(model, r.attended,
                                                  fs::path(at_image).stem().string(), at_outdir);
        std::cout << "wrote " << exported.image_files.size() << " heatmaps + "
                  << exported.sidecar.string() << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const FileError& e) {
        emit_error("missing_file", e.what());
        return kExitMissingFile;
    } catch (const SchemaError& e) {
        emit_error("schema_violation", e.what());
        return kExitSchema;
    } catch (const TransportError& e) {
        emit_error("llm_failure", e.what());
        return kExitLlm;
    } catch (const Error& e) {
        emit_error("error", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return kExitError;
    }
}
