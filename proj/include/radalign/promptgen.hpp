#pragma once

#include "radalign/alignment.hpp"
#include "radalign/io.hpp"
#include "radalign/llm_client.hpp"
#include "radalign/retrieval.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace radalign {

struct LabelScore {
    int label_id = 0;
    std::string code;
    std::string name;
    double score = 0.0;
};

struct RetrievedCase {
    double score = 0.0;
    std::string report;
};

// Everything the LLM prompt is assembled from: classification result,
// per-criterion findings, and retrieved similar cases in rank order.
struct PromptBundle {
    std::vector<LabelScore> predictions;   // all N classes, id order
    FindingSet findings;                   // all K criteria, criterion order
    std::vector<RetrievedCase> retrieved;  // sorted descending by score
    std::string template_id;

    bool operator==(const PromptBundle&) const = default;
};

inline bool operator==(const LabelScore& a, const LabelScore& b) {
    return a.label_id == b.label_id && a.code == b.code && a.name == b.name && a.score == b.score;
}

inline bool operator==(const RetrievedCase& a, const RetrievedCase& b) {
    return a.score == b.score && a.report == b.report;
}

inline PromptBundle make_bundle(const AlignModel& model, const InferenceResult& inference,
                                const std::vector<RetrievalHit>& hits,
                                const std::string& template_id) {
    PromptBundle b;
    b.template_id = template_id;
    for (int c = 0; c < model.N(); ++c) {
        const auto& l = model.criteria.labels[static_cast<size_t>(c)];
        b.predictions.push_back({l.id, l.code, l.name, inference.scores(c)});
    }
    b.findings = inference.findings;
    for (const auto& h : hits) b.retrieved.push_back({h.score, h.report});
    return b;
}

// Prompt templates are plain-text files with {diagnosis}, {findings} and
// {cases} placeholders; the file stem is the template id so generated
// reports stay attributable to a template version.
struct PromptTemplate {
    std::string id;
    std::string text;
};

inline PromptTemplate load_template(const std::filesystem::path& path) {
    PromptTemplate t;
    t.id = path.stem().string();
    t.text = io::read_text_file(path);
    for (const char* ph : {"{diagnosis}", "{findings}", "{cases}"})
        if (t.text.find(ph) == std::string::npos)
            throw FormatError("template '" + path.string() + "' is missing placeholder " + ph);
    return t;
}

struct RenderOptions {
    size_t max_finding_len = 4096;  // findings longer than this are truncated (and logged)
};

namespace detail {

inline std::string fmt3(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace detail

// Deterministic: byte-identical output for value-equal bundles.
inline std::string render_prompt(const PromptBundle& bundle, const PromptTemplate& tmpl,
                                 const RenderOptions& opts = {},
                                 std::ostream& log = std::cerr) {
    std::ostringstream diagnosis;
    for (const auto& p : bundle.predictions)
        diagnosis << "- " << p.code << " (" << p.name << "): " << detail::fmt3(p.score) << "\n";

    std::ostringstream findings;
    for (const auto& f : bundle.findings) {
        std::string text = f.text;
        if (text.size() > opts.max_finding_len) {
            text.resize(opts.max_finding_len);
            log << "warning: finding for criterion '" << f.criterion_name << "' truncated to "
                << opts.max_finding_len << " chars\n";
        }
        findings << "- " << f.criterion_name << ": " << text
                 << " (similarity " << detail::fmt3(f.similarity) << ")\n";
    }

    std::ostringstream cases;
    if (bundle.retrieved.empty()) {
        cases << "none available\n";
    } else {
        for (size_t i = 0; i < bundle.retrieved.size(); ++i) {
            const auto& rc = bundle.retrieved[i];
            cases << "Case " << (i + 1) << " (score " << detail::fmt3(rc.score) << "):\n"
                  << rc.report << "\n";
        }
    }

    std::string out = tmpl.text;
    detail::replace_all(out, "{diagnosis}", diagnosis.str());
    detail::replace_all(out, "{findings}", findings.str());
    detail::replace_all(out, "{cases}", cases.str());
    return out;
}

struct GenerateOptions {
    int max_retries = 3;          // additional attempts after the first failure
    int backoff_base_ms = 250;    // doubled per retry; 0 disables sleeping
    GenerationParams params;
};

struct ReportDraft {
    std::string text;
    std::string prompt;       // exact prompt sent, for provenance
    std::string client_name;
    std::string template_id;
    double latency_ms = 0.0;
    int retries = 0;
};

inline ReportDraft generate_report(const PromptBundle& bundle, const PromptTemplate& tmpl,
                                   LLMClient& client, const GenerateOptions& opts = {},
                                   const RenderOptions& render_opts = {}) {
    ReportDraft draft;
    draft.prompt = render_prompt(bundle, tmpl, render_opts);
    draft.client_name = client.name();
    draft.template_id = tmpl.id;

    auto t0 = std::chrono::steady_clock::now();
    int attempt = 0;
    for (;;) {
        try {
            draft.text = client.generate(draft.prompt, opts.params);
            break;
        } catch (const TransportError&) {
            if (attempt >= opts.max_retries) throw;
            if (opts.backoff_base_ms > 0) {
                int delay = opts.backoff_base_ms << attempt;
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
            ++attempt;
        }
    }
    draft.retries = attempt;
    draft.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    if (draft.text.empty()) throw Error("LLM returned an empty completion");
    return draft;
}

// Batch variant with a bounded number of in-flight calls; results keep the
// input order.
inline std::vector<ReportDraft> generate_reports(const std::vector<PromptBundle>& bundles,
                                                 const PromptTemplate& tmpl, LLMClient& client,
                                                 const GenerateOptions& opts = {},
                                                 int max_in_flight = 4) {
    if (max_in_flight < 1) throw PreconditionError("generate_reports: max_in_flight must be >= 1");
    std::vector<ReportDraft> out(bundles.size());
    size_t next = 0;
    while (next < bundles.size()) {
        size_t batch = std::min<size_t>(static_cast<size_t>(max_in_flight),
                                        bundles.size() - next);
        std::vector<std::future<ReportDraft>> futs;
        futs.reserve(batch);
        for (size_t i = 0; i < batch; ++i) {
            const PromptBundle& b = bundles[next + i];
            futs.push_back(std::async(std::launch::async, [&b, &tmpl, &client, &opts] {
                return generate_report(b, tmpl, client, opts);
            }));
        }
        for (size_t i = 0; i < batch; ++i) out[next + i] = futs[i].get();
        next += batch;
    }
    return out;
}

}  // namespace radalign
