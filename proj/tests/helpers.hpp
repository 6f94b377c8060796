#pragma once

#include "radalign/radalign.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace testutil {

inline std::filesystem::path data_dir() { return RADALIGN_DATA_DIR; }
inline std::filesystem::path template_dir() { return RADALIGN_TEMPLATE_DIR; }
inline std::filesystem::path test_data_dir() { return RADALIGN_TEST_DATA_DIR; }

inline radalign::CriterionSet fixture_criteria() {
    return radalign::load_criteria(data_dir() / "criteria_chestxray14.json");
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path_ = base / ("radalign_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline radalign::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, radalign::Rng& rng,
                                      double scale = 1.0) {
    radalign::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * radalign::gaussian(rng);
    return m;
}

inline radalign::Vector random_vector(Eigen::Index n, radalign::Rng& rng, double scale = 1.0) {
    radalign::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * radalign::gaussian(rng);
    return v;
}

// A tiny criteria set (3 criteria / 2 labels, one single-description
// criterion) for fast numeric tests.
inline radalign::CriterionSet tiny_criteria() {
    using namespace radalign;
    CriterionSet cs;
    cs.version = "tiny-v1";
    cs.labels = {{0, "A", "Alpha"}, {1, "B", "Beta"}};
    Criterion c0;
    c0.id = 0;
    c0.name = "Shape";
    c0.descriptions = {{0, 0, "regular shape", {}},
                       {0, 1, "irregular shape", {0}},
                       {0, 2, "lobulated shape", {1}}};
    Criterion c1;
    c1.id = 1;
    c1.name = "Margin";
    c1.descriptions = {{1, 0, "smooth margin", {}}, {1, 1, "spiculated margin", {0, 1}}};
    Criterion c2;
    c2.id = 2;
    c2.name = "Density";
    c2.descriptions = {{2, 0, "uniform density", {}}};
    cs.criteria = {c0, c1, c2};
    return cs;
}

inline std::string read_file(const std::filesystem::path& p) {
    return radalign::io::read_text_file(p);
}

}  // namespace testutil
