#pragma once

#include "radalign/alignment.hpp"
#include "radalign/datagen.hpp"
#include "radalign/io.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace radalign {

struct IndexEntry {
    int64_t entry_id = 0;   // insertion order
    Matrix tokens;          // (K, d) attended concept tokens
    std::string report;
    std::set<int> labels;   // test instrumentation only

    bool operator==(const IndexEntry&) const = default;
};

// Append-only store of (concept tokens, report) pairs for retrieval
// augmentation. Immutable after build.
struct ReportIndex {
    std::vector<IndexEntry> entries;
    uint64_t model_fingerprint = 0;

    bool operator==(const ReportIndex&) const = default;

    int K() const { return entries.empty() ? 0 : static_cast<int>(entries.front().tokens.rows()); }
    int d() const { return entries.empty() ? 0 : static_cast<int>(entries.front().tokens.cols()); }
};

// One entry per dataset example, in dataset order; tokens are the z_hat the
// model infers for the image. Examples without a report are skipped with a
// warning.
inline ReportIndex build_index(const AlignModel& model, const std::vector<Example>& dataset,
                               std::ostream& warnings = std::cerr) {
    ReportIndex index;
    index.model_fingerprint = model.fingerprint;
    int64_t next_id = 0;
    for (const auto& ex : dataset) {
        if (ex.report.empty()) {
            warnings << "warning: example '" << ex.id << "' has no report, skipped\n";
            continue;
        }
        IndexEntry e;
        e.entry_id = next_id++;
        e.tokens = infer(model, ex.image, ex.id).attended.z_hat;
        e.report = ex.report;
        e.labels = ex.labels;
        index.entries.push_back(std::move(e));
    }
    return index;
}

struct RetrievalHit {
    int64_t entry_id = 0;
    double score = 0.0;
    std::string report;
    std::set<int> labels;
};

// Similarity between two token matrices: sum over criteria of per-token dot
// products (the Frobenius inner product). Ties break by ascending entry_id
// so retrieval-augmented prompts are reproducible.
inline std::vector<RetrievalHit> query_topk(const ReportIndex& index, const Matrix& query_tokens,
                                            int k) {
    if (k < 1) throw PreconditionError("query_topk: k must be >= 1");
    if (index.entries.empty()) throw PreconditionError("query_topk: index is empty");
    if (query_tokens.rows() != index.K() || query_tokens.cols() != index.d())
        throw PreconditionError("query_topk: query tokens are " +
                                std::to_string(query_tokens.rows()) + "x" +
                                std::to_string(query_tokens.cols()) + ", index holds " +
                                std::to_string(index.K()) + "x" + std::to_string(index.d()));

    std::vector<std::pair<double, int64_t>> scored;  // (score, entry_id)
    scored.reserve(index.entries.size());
    for (const auto& e : index.entries) {
        // Accumulated in fixed row-major order so scores are bit-identical
        // to a plain loop over the token matrices.
        double s = 0.0;
        for (Eigen::Index i = 0; i < e.tokens.rows(); ++i)
            for (Eigen::Index j = 0; j < e.tokens.cols(); ++j)
                s += e.tokens(i, j) * query_tokens(i, j);
        scored.emplace_back(s, e.entry_id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const size_t take = std::min<size_t>(static_cast<size_t>(k), scored.size());
    std::vector<RetrievalHit> out;
    out.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        const auto& e = index.entries[static_cast<size_t>(scored[i].second)];
        out.push_back({e.entry_id, scored[i].first, e.report, e.labels});
    }
    return out;
}

// ---- "RIDX" persistence ---------------------------------------------------
//
// magic, u32 version, u64 entry count, u32 K, u32 d, u64 model fingerprint,
// then per entry: token block (row-major float64), u32 report length +
// UTF-8 bytes, u32 label bitmap.

inline void save_index(const ReportIndex& index, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        io::write_magic(os, "RIDX");
        io::write_u32(os, 1);
        io::write_u64(os, static_cast<uint64_t>(index.entries.size()));
        io::write_u32(os, static_cast<uint32_t>(index.K()));
        io::write_u32(os, static_cast<uint32_t>(index.d()));
        io::write_u64(os, index.model_fingerprint);
        for (const auto& e : index.entries) {
            io::write_matrix_data(os, e.tokens);
            io::write_string(os, e.report);
            uint32_t bitmap = 0;
            for (int l : e.labels) {
                if (l < 0 || l >= 32)
                    throw PreconditionError("save_index: label id " + std::to_string(l) +
                                            " does not fit the 32-bit label bitmap");
                bitmap |= (1u << l);
            }
            io::write_u32(os, bitmap);
        }
    });
}

struct LoadedIndex {
    ReportIndex index;
    // Set when the caller passed the current model's fingerprint and it does
    // not match the one stored in the file.
    std::optional<std::string> fingerprint_warning;
};

inline LoadedIndex load_index(const std::filesystem::path& path,
                              std::optional<uint64_t> current_model_fingerprint = std::nullopt) {
    auto is = io::open_input(path);
    io::expect_magic(is, "RIDX", "RIDX index");
    uint32_t version = io::read_u32(is, "version");
    if (version != 1) throw FormatError("unsupported RIDX version " + std::to_string(version));
    uint64_t count = io::read_u64(is, "entry count");
    auto K = static_cast<Eigen::Index>(io::read_u32(is, "K"));
    auto d = static_cast<Eigen::Index>(io::read_u32(is, "d"));
    // Tokens + report length + bitmap give a hard lower bound per entry.
    io::expect_payload(is,
                       count * (static_cast<uint64_t>(K) * static_cast<uint64_t>(d) * 8 + 8),
                       "index entries");

    LoadedIndex out;
    out.index.model_fingerprint = io::read_u64(is, "fingerprint");
    for (uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.entry_id = static_cast<int64_t>(i);
        e.tokens = io::read_matrix_data(is, K, d);
        e.report = io::read_string(is, "report");
        uint32_t bitmap = io::read_u32(is, "label bitmap");
        for (int l = 0; l < 32; ++l)
            if (bitmap & (1u << l)) e.labels.insert(l);
        out.index.entries.push_back(std::move(e));
    }
    if (current_model_fingerprint && *current_model_fingerprint != out.index.model_fingerprint) {
        out.fingerprint_warning =
            "index was built under a different checkpoint (index fingerprint " +
            std::to_string(out.index.model_fingerprint) + ", current model " +
            std::to_string(*current_model_fingerprint) + ")";
    }
    return out;
}

}  // namespace radalign
