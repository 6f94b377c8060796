#pragma once

#include "radalign/common.hpp"
#include "radalign/io.hpp"
#include "radalign/knowledge.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace radalign {

struct Example {
    Matrix image;          // (H, W)
    std::set<int> labels;  // disease ids, possibly empty
    std::string report;
    std::string id;
};

// Planted-concept synthetic data: every disease owns a fixed spatial
// signature block; an image is Gaussian noise plus the signatures of its
// labels, and its report embeds the disease's mapped concept descriptions
// verbatim so retrieval ground truth exists.
struct SynthSpec {
    int n_examples = 200;
    int H = 32;
    int W = 32;
    double noise_std = 0.05;
    uint64_t seed = 0;
    std::vector<double> prevalence;   // per-class; empty = 0.3 for every class
    double co_occurrence = 0.0;       // chance of adding one extra label when any is active
    int min_labels = 0;               // resample until at least this many labels
    int signature_size = 8;           // square signature side, pixels
    double signature_amplitude = 1.0;

    void validate() const {
        if (n_examples < 0) throw PreconditionError("SynthSpec: n_examples must be >= 0");
        if (H <= 0 || W <= 0) throw PreconditionError("SynthSpec: image dims must be positive");
        if (noise_std < 0) throw PreconditionError("SynthSpec: noise_std must be >= 0");
        for (double p : prevalence)
            if (p <= 0.0 || p >= 1.0)
                throw PreconditionError("SynthSpec: prevalences must lie in (0,1)");
        if (signature_size <= 0 || signature_size > H || signature_size > W)
            throw PreconditionError("SynthSpec: signature_size must fit in the image");
    }
};

struct Region {
    int r0 = 0;
    int c0 = 0;
    int size = 0;
};

// Deterministic non-overlapping placement: the image is tiled into
// signature-sized slots and class c takes slot floor(c * n_slots / N).
inline Region signature_region(const SynthSpec& spec, int class_id, int n_classes) {
    const int sh = spec.H / spec.signature_size;
    const int sw = spec.W / spec.signature_size;
    const int n_slots = sh * sw;
    if (n_classes > n_slots)
        throw PreconditionError("signature_region: " + std::to_string(n_classes) +
                                " classes need more slots than the image provides (" +
                                std::to_string(n_slots) + ")");
    if (class_id < 0 || class_id >= n_classes)
        throw PreconditionError("signature_region: class id out of range");
    const int slot = static_cast<int>(static_cast<long>(class_id) * n_slots / n_classes);
    return {(slot / sw) * spec.signature_size, (slot % sw) * spec.signature_size,
            spec.signature_size};
}

// The fixed per-class pattern planted inside its region. Seeded from
// (spec.seed, class_id) only, so it is stable across dataset sizes.
inline Matrix class_signature(const SynthSpec& spec, int class_id) {
    uint64_t mix = spec.seed;
    (void)splitmix64(mix);
    mix ^= 0x5851f42d4c957f2dull * static_cast<uint64_t>(class_id + 1);
    Rng rng(splitmix64(mix));
    Matrix sig(spec.signature_size, spec.signature_size);
    for (int r = 0; r < spec.signature_size; ++r)
        for (int c = 0; c < spec.signature_size; ++c)
            sig(r, c) = spec.signature_amplitude * gaussian(rng);
    return sig;
}

namespace detail {

inline std::string synthetic_report(const std::set<int>& labels, const CriterionSet& criteria) {
    std::ostringstream os;
    if (labels.empty()) {
        os << "No acute cardiopulmonary abnormality.";
        int used = 0;
        for (const auto& crit : criteria.criteria) {
            for (const auto& d : crit.descriptions) {
                if (d.diseases.empty()) {
                    os << " " << d.text << ".";
                    ++used;
                    break;
                }
            }
            if (used >= 3) break;
        }
        return os.str();
    }
    bool first_label = true;
    for (int l : labels) {
        const auto& label = criteria.labels[static_cast<size_t>(l)];
        if (!first_label) os << " ";
        first_label = false;
        os << label.name << ": ";
        bool first_desc = true;
        for (const auto& crit : criteria.criteria) {
            for (const auto& d : crit.descriptions) {
                if (d.diseases.count(l)) {
                    if (!first_desc) os << "; ";
                    first_desc = false;
                    os << d.text;
                }
            }
        }
        os << ".";
    }
    return os.str();
}

}  // namespace detail

// One example with the given labels; noise drawn from `rng` per noise_std.
inline Example planted_example(const SynthSpec& spec, const CriterionSet& criteria,
                               const std::set<int>& labels, const std::string& id, Rng& rng) {
    Example ex;
    ex.id = id;
    ex.labels = labels;
    ex.image = Matrix::Zero(spec.H, spec.W);
    if (spec.noise_std > 0) {
        for (int r = 0; r < spec.H; ++r)
            for (int c = 0; c < spec.W; ++c) ex.image(r, c) = spec.noise_std * gaussian(rng);
    }
    const int N = criteria.num_labels();
    for (int l : labels) {
        Region reg = signature_region(spec, l, N);
        ex.image.block(reg.r0, reg.c0, reg.size, reg.size) += class_signature(spec, l);
    }
    ex.report = detail::synthetic_report(labels, criteria);
    return ex;
}

inline std::vector<Example> generate(const SynthSpec& spec, const CriterionSet& criteria) {
    spec.validate();
    for (const auto& v : validate_criteria(criteria))
        if (!v.warning) throw PreconditionError("generate: criteria set invalid: " + v.message);
    const int N = criteria.num_labels();
    // Every class needs at least one mapped description for report text.
    for (int c = 0; c < N; ++c) {
        bool mapped = false;
        for (const auto& crit : criteria.criteria)
            for (const auto& d : crit.descriptions)
                if (d.diseases.count(c)) mapped = true;
        if (!mapped)
            throw PreconditionError("generate: disease '" +
                                    criteria.labels[static_cast<size_t>(c)].code +
                                    "' has no mapped description");
    }

    std::vector<double> prev = spec.prevalence;
    if (prev.empty()) prev.assign(static_cast<size_t>(N), 0.3);
    if (prev.size() == 1) prev.assign(static_cast<size_t>(N), prev[0]);
    if (static_cast<int>(prev.size()) != N)
        throw PreconditionError("generate: prevalence list length != number of classes");
    if (spec.min_labels > N)
        throw PreconditionError("generate: min_labels exceeds number of classes");

    Rng rng(spec.seed);
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(spec.n_examples));
    for (int i = 0; i < spec.n_examples; ++i) {
        std::set<int> labels;
        do {
            labels.clear();
            for (int c = 0; c < N; ++c)
                if (uniform01(rng) < prev[static_cast<size_t>(c)]) labels.insert(c);
            if (!labels.empty() && static_cast<int>(labels.size()) < N &&
                spec.co_occurrence > 0 && uniform01(rng) < spec.co_occurrence) {
                std::vector<int> absent;
                for (int c = 0; c < N; ++c)
                    if (!labels.count(c)) absent.push_back(c);
                labels.insert(absent[rng() % absent.size()]);
            }
        } while (static_cast<int>(labels.size()) < spec.min_labels);

        std::ostringstream id;
        id << "synth-" << std::setw(5) << std::setfill('0') << i;
        out.push_back(planted_example(spec, criteria, labels, id.str(), rng));
    }
    return out;
}

// ---- On-disk dataset format ----------------------------------------------
//
// Directory with manifest.json plus one "RIMG" binary file per image:
//   manifest: {"examples": [{"id": str, "image_file": str,
//                            "labels": [int], "report": str}]}
//   RIMG: magic, u32 version, u32 H, u32 W, row-major float64 pixels.

inline void save_image(const Matrix& image, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        io::write_magic(os, "RIMG");
        io::write_u32(os, 1);
        io::write_u32(os, static_cast<uint32_t>(image.rows()));
        io::write_u32(os, static_cast<uint32_t>(image.cols()));
        io::write_matrix_data(os, image);
    });
}

inline Matrix load_image(const std::filesystem::path& path) {
    auto is = io::open_input(path);
    io::expect_magic(is, "RIMG", "RIMG image");
    uint32_t version = io::read_u32(is, "version");
    if (version != 1) throw FormatError("unsupported RIMG version " + std::to_string(version));
    auto rows = static_cast<Eigen::Index>(io::read_u32(is, "rows"));
    auto cols = static_cast<Eigen::Index>(io::read_u32(is, "cols"));
    return io::read_matrix_data(is, rows, cols);
}

inline void save_dataset(const std::vector<Example>& examples,
                         const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    nlohmann::ordered_json manifest;
    manifest["examples"] = nlohmann::ordered_json::array();
    for (const auto& ex : examples) {
        std::string file = "images/" + ex.id + ".rimg";
        save_image(ex.image, dir / file);
        nlohmann::ordered_json je;
        je["id"] = ex.id;
        je["image_file"] = file;
        je["labels"] = std::vector<int>(ex.labels.begin(), ex.labels.end());
        je["report"] = ex.report;
        manifest["examples"].push_back(std::move(je));
    }
    io::atomic_write(dir / "manifest.json",
                     [&](std::ostream& os) { os << manifest.dump(2) << "\n"; });
}

inline std::vector<Example> load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw FileError(manifest_path.string(), "dataset manifest not found");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest is not valid JSON: " + std::string(e.what()));
    }
    if (!manifest.contains("examples") || !manifest["examples"].is_array())
        throw SchemaError("examples", "missing or not an array");

    std::vector<Example> out;
    const auto& records = manifest["examples"];
    for (size_t i = 0; i < records.size(); ++i) {
        try {
            const auto& je = records[i];
            Example ex;
            ex.id = je.at("id").get<std::string>();
            ex.report = je.at("report").get<std::string>();
            auto labels = je.at("labels").get<std::vector<int>>();
            ex.labels = std::set<int>(labels.begin(), labels.end());
            ex.image = load_image(dir / je.at("image_file").get<std::string>());
            out.push_back(std::move(ex));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset record " + std::to_string(i) + ": " + e.what());
        } catch (const Error& e) {
            throw FormatError("dataset record " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace radalign
