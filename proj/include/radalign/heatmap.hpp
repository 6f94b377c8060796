#pragma once

#include "radalign/alignment.hpp"
#include "radalign/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace radalign {

// One attention row reshaped to the patch grid, row-major, matching the
// patch extraction order of the vision encoder.
inline Matrix attention_to_grid(const Vector& weights, const EncoderSpec& spec) {
    if (weights.size() != spec.M())
        throw PreconditionError("attention_to_grid: row length " + std::to_string(weights.size()) +
                                " != M " + std::to_string(spec.M()));
    Matrix g(spec.grid_h(), spec.grid_w());
    int m = 0;
    for (int r = 0; r < spec.grid_h(); ++r)
        for (int c = 0; c < spec.grid_w(); ++c, ++m) g(r, c) = weights(m);
    return g;
}

// Bilinear upsampling with endpoint alignment: corners of the grid map to
// corners of the output.
inline Matrix bilinear_upsample(const Matrix& src, int out_h, int out_w) {
    Matrix out(out_h, out_w);
    const auto sh = static_cast<double>(src.rows());
    const auto sw = static_cast<double>(src.cols());
    for (int r = 0; r < out_h; ++r) {
        double sr = out_h == 1 ? 0.0 : static_cast<double>(r) * (sh - 1) / (out_h - 1);
        int r0 = static_cast<int>(std::floor(sr));
        int r1 = std::min(r0 + 1, static_cast<int>(src.rows()) - 1);
        double fr = sr - r0;
        for (int c = 0; c < out_w; ++c) {
            double sc = out_w == 1 ? 0.0 : static_cast<double>(c) * (sw - 1) / (out_w - 1);
            int c0 = static_cast<int>(std::floor(sc));
            int c1 = std::min(c0 + 1, static_cast<int>(src.cols()) - 1);
            double fc = sc - c0;
            out(r, c) = (1 - fr) * ((1 - fc) * src(r0, c0) + fc * src(r0, c1)) +
                        fr * ((1 - fc) * src(r1, c0) + fc * src(r1, c1));
        }
    }
    return out;
}

inline Matrix min_max_normalize(const Matrix& m) {
    double lo = m.minCoeff();
    double hi = m.maxCoeff();
    if (hi <= lo) return Matrix::Zero(m.rows(), m.cols());
    return (m.array() - lo) / (hi - lo);
}

// 8-bit binary PGM (P5).
inline void save_pgm(const Matrix& gray01, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        os << "P5\n" << gray01.cols() << " " << gray01.rows() << "\n255\n";
        for (Eigen::Index r = 0; r < gray01.rows(); ++r) {
            for (Eigen::Index c = 0; c < gray01.cols(); ++c) {
                double v = std::clamp(gray01(r, c), 0.0, 1.0);
                auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
                os.put(static_cast<char>(byte));
            }
        }
    });
}

inline std::string slugify(const std::string& name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else if (!out.empty() && out.back() != '_')
            out.push_back('_');
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

struct HeatmapExport {
    std::vector<std::filesystem::path> image_files;  // one per concept token
    std::filesystem::path sidecar;                   // raw weights JSON
};

// Writes one grayscale heatmap per concept token (attention reshaped to the
// patch grid, min-max normalized, bilinearly upsampled to the input size)
// plus a JSON sidecar with the raw weights.
inline HeatmapExport export_attention_heatmaps(const AlignModel& model,
                                               const AttendedTokens& att,
                                               const std::string& image_id,
                                               const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    HeatmapExport out;
    nlohmann::ordered_json sidecar;
    sidecar["image_id"] = image_id;
    sidecar["patch_grid"] = {model.spec.grid_h(), model.spec.grid_w()};
    sidecar["tokens"] = nlohmann::ordered_json::array();
    for (int i = 0; i < model.K(); ++i) {
        const auto& crit = model.criteria.criteria[static_cast<size_t>(i)];
        Vector row = att.attn.row(i).transpose();
        Matrix grid = attention_to_grid(row, model.spec);
        Matrix up = bilinear_upsample(min_max_normalize(grid), model.spec.image_h,
                                      model.spec.image_w);
        char idx[16];
        std::snprintf(idx, sizeof idx, "%02d", i);
        auto file = out_dir / ("token_" + std::string(idx) + "_" + slugify(crit.name) + ".pgm");
        save_pgm(up, file);
        out.image_files.push_back(file);

        nlohmann::ordered_json jt;
        jt["criterion_id"] = crit.id;
        jt["name"] = crit.name;
        jt["weights"] = std::vector<double>(row.data(), row.data() + row.size());
        sidecar["tokens"].push_back(std::move(jt));
    }
    out.sidecar = out_dir / "attention_weights.json";
    io::atomic_write(out.sidecar, [&](std::ostream& os) { os << sidecar.dump(2) << "\n"; });
    return out;
}

}  // namespace radalign
