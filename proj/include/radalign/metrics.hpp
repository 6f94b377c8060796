#pragma once

#include "radalign/alignment.hpp"
#include "radalign/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace radalign {

// Rank-based (Mann-Whitney) AUC; tied scores contribute 1/2 per pair.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw PreconditionError("auc: scores/labels length mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw PreconditionError("auc: labels must be 0/1");
        n_pos += static_cast<size_t>(l);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw MetricError("auc undefined: only one class present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks across tie groups, then the Mann-Whitney statistic.
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) pos_rank_sum += rank[k];
    double np = static_cast<double>(n_pos);
    double nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// F1 of thresholded predictions; 0 by convention when precision + recall
// is undefined or zero.
inline double f1(const std::vector<double>& scores, const std::vector<int>& labels,
                 double threshold = 0.5) {
    if (scores.size() != labels.size())
        throw PreconditionError("f1: scores/labels length mismatch");
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw PreconditionError("f1: labels must be 0/1");
        bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) ++tp;
        else if (pred && labels[i] == 0) ++fp;
        else if (!pred && labels[i] == 1) ++fn;
    }
    double denom = 2.0 * tp + fp + fn;
    if (denom == 0.0) return 0.0;
    return 2.0 * tp / denom;
}

struct ClassMetrics {
    int label_id = 0;
    std::string code;
    std::string name;
    double f1 = 0.0;
    std::optional<double> auc;  // missing when only one class value occurs
};

struct EvalResult {
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    std::optional<double> macro_auc;  // unweighted mean over classes with AUC
    int n_examples = 0;
    std::vector<std::string> warnings;
};

inline EvalResult evaluate(const AlignModel& model, const std::vector<Example>& dataset) {
    if (dataset.empty()) throw PreconditionError("evaluate: dataset is empty");
    const int N = model.N();
    std::vector<std::vector<double>> scores(static_cast<size_t>(N));
    std::vector<std::vector<int>> labels(static_cast<size_t>(N));
    for (const auto& ex : dataset) {
        InferenceResult r = infer(model, ex.image, ex.id);
        for (int c = 0; c < N; ++c) {
            scores[static_cast<size_t>(c)].push_back(r.scores(c));
            labels[static_cast<size_t>(c)].push_back(ex.labels.count(c) ? 1 : 0);
        }
    }

    EvalResult res;
    res.n_examples = static_cast<int>(dataset.size());
    double f1_sum = 0.0, auc_sum = 0.0;
    int auc_count = 0;
    for (int c = 0; c < N; ++c) {
        ClassMetrics cm;
        cm.label_id = c;
        cm.code = model.criteria.labels[static_cast<size_t>(c)].code;
        cm.name = model.criteria.labels[static_cast<size_t>(c)].name;
        cm.f1 = f1(scores[static_cast<size_t>(c)], labels[static_cast<size_t>(c)]);
        f1_sum += cm.f1;
        try {
            cm.auc = auc(scores[static_cast<size_t>(c)], labels[static_cast<size_t>(c)]);
            auc_sum += *cm.auc;
            ++auc_count;
        } catch (const MetricError&) {
            res.warnings.push_back("class '" + cm.code +
                                   "' has a single label value; AUC excluded from macro");
        }
        res.per_class.push_back(std::move(cm));
    }
    res.macro_f1 = f1_sum / N;
    if (auc_count > 0) res.macro_auc = auc_sum / auc_count;
    return res;
}

// Plumbing proxy for report quality: the fraction of criterion findings
// whose text appears (case-insensitive substring) in the draft. Not a
// substitute for LLM-judged metrics.
inline double finding_agreement(const std::string& draft_text, const FindingSet& findings) {
    if (findings.empty()) return 0.0;
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    };
    std::string haystack = lower(draft_text);
    int hits = 0;
    for (const auto& f : findings)
        if (!f.text.empty() && haystack.find(lower(f.text)) != std::string::npos) ++hits;
    return static_cast<double>(hits) / static_cast<double>(findings.size());
}

inline nlohmann::ordered_json eval_to_json(const EvalResult& r) {
    nlohmann::ordered_json j;
    j["n_examples"] = r.n_examples;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& cm : r.per_class) {
        nlohmann::ordered_json jc;
        jc["label"] = cm.code;
        jc["name"] = cm.name;
        jc["f1"] = cm.f1;
        if (cm.auc) jc["auc"] = *cm.auc;
        else jc["auc"] = nullptr;
        j["per_class"].push_back(std::move(jc));
    }
    j["macro_f1"] = r.macro_f1;
    if (r.macro_auc) j["macro_auc"] = *r.macro_auc;
    else j["macro_auc"] = nullptr;
    j["warnings"] = r.warnings;
    return j;
}

// Per-class grid in the style of a classification results table.
inline std::string format_eval_grid(const EvalResult& r) {
    std::ostringstream os;
    char buf[64];
    os << "class   ";
    for (const auto& cm : r.per_class) os << "  " << cm.code << "     ";
    os << "  Avg\n";
    os << "F1      ";
    for (const auto& cm : r.per_class) {
        std::snprintf(buf, sizeof buf, "%7.3f", cm.f1);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%7.3f", r.macro_f1);
    os << buf << "\n";
    os << "AUC     ";
    for (const auto& cm : r.per_class) {
        if (cm.auc) {
            std::snprintf(buf, sizeof buf, "%7.3f", *cm.auc);
            os << buf;
        } else {
            os << "      -";
        }
    }
    if (r.macro_auc) {
        std::snprintf(buf, sizeof buf, "%7.3f", *r.macro_auc);
        os << buf;
    } else {
        os << "      -";
    }
    os << "\n";
    return os.str();
}

}  // namespace radalign
