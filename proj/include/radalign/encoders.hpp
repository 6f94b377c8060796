#pragma once

#include "radalign/common.hpp"
#include "radalign/io.hpp"

#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

namespace radalign {

// Shared dimensional contract between the encoders and the alignment core.
// M (spatial positions per image) is derived from the image and patch
// geometry so it cannot drift out of sync.
struct EncoderSpec {
    int d = 64;        // shared embedding width
    int d_v = 32;      // vision feature width
    int patch = 4;     // non-overlapping square patch side
    int image_h = 32;
    int image_w = 32;
    uint64_t seed = 0;

    int grid_h() const { return image_h / patch; }
    int grid_w() const { return image_w / patch; }
    int M() const { return grid_h() * grid_w(); }

    void validate() const {
        if (d <= 0 || d_v <= 0 || patch <= 0 || image_h <= 0 || image_w <= 0)
            throw PreconditionError("EncoderSpec: all dimensions must be positive");
        if (image_h % patch != 0 || image_w % patch != 0)
            throw PreconditionError("EncoderSpec: image dims must be multiples of patch size");
    }

    bool operator==(const EncoderSpec&) const = default;
};

struct TextEmbedding {
    Matrix matrix;          // (n_i, d), rows L2-normalized
    int criterion_id = -1;
};

struct VisionFeatures {
    Matrix grid;            // (M, d_v)
    std::string image_id;
};

// ---- Frozen text encoder ----------------------------------------------
//
// Hashed bag-of-tokens pushed through a fixed seeded random projection,
// then L2-normalized. Has no trainable parameters at all, which makes the
// frozen-text contract hold by construction.

namespace detail {

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

}  // namespace detail

class TextEncoder {
public:
    explicit TextEncoder(const EncoderSpec& spec) : d_(spec.d), seed_(spec.seed) {}

    Vector embed(const std::string& text) const {
        auto tokens = detail::tokenize(text);
        if (tokens.empty())
            throw PreconditionError("encode_text: text has no tokens: '" + text + "'");
        Vector v = Vector::Zero(d_);
        for (const auto& tok : tokens) {
            // Each token's projection column is derived from its hash mixed
            // with the encoder seed, so no projection matrix is stored.
            uint64_t state = fnv1a64(tok) ^ (seed_ * 0x9e3779b97f4a7c15ull + 0x6a09e667f3bcc909ull);
            for (int i = 0; i < d_; ++i) {
                uint64_t bits = splitmix64(state);
                v(i) += static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;  // uniform [-1, 1)
            }
        }
        double norm = v.norm();
        if (norm > 0) v /= norm;
        return v;
    }

private:
    int d_;
    uint64_t seed_;
};

inline TextEmbedding encode_text(const std::vector<std::string>& texts, const EncoderSpec& spec,
                                 int criterion_id = -1) {
    if (texts.empty()) throw PreconditionError("encode_text: empty text list");
    spec.validate();
    TextEncoder enc(spec);
    TextEmbedding out;
    out.criterion_id = criterion_id;
    out.matrix.resize(static_cast<Eigen::Index>(texts.size()), spec.d);
    for (size_t i = 0; i < texts.size(); ++i)
        out.matrix.row(static_cast<Eigen::Index>(i)) = enc.embed(texts[i]).transpose();
    return out;
}

// ---- Trainable vision encoder ------------------------------------------
//
// Non-overlapping patch extraction, one shared linear map per patch, tanh.
// Exposes the same (M, d_v) feature-grid contract as a CNN backbone while
// training in seconds on a CPU.

class VisionEncoder {
public:
    VisionEncoder() = default;
    explicit VisionEncoder(const EncoderSpec& spec) : spec_(spec) {
        spec_.validate();
        W_p = Matrix::Zero(spec.d_v, spec.patch * spec.patch);
        b_p = Vector::Zero(spec.d_v);
    }

    void init(Rng& rng) {
        const double std = 1.0 / spec_.patch;  // ~ 1/sqrt(fan_in)
        for (Eigen::Index r = 0; r < W_p.rows(); ++r)
            for (Eigen::Index c = 0; c < W_p.cols(); ++c) W_p(r, c) = std * gaussian(rng);
        b_p.setZero();
    }

    const EncoderSpec& spec() const { return spec_; }

    // (M, patch*patch) matrix of flattened patches, row-major over the
    // patch grid, row-major within each patch.
    Matrix patches(const Matrix& image) const {
        check_image(image);
        const int p = spec_.patch;
        Matrix P(spec_.M(), p * p);
        int m = 0;
        for (int gr = 0; gr < spec_.grid_h(); ++gr) {
            for (int gc = 0; gc < spec_.grid_w(); ++gc, ++m) {
                int k = 0;
                for (int r = 0; r < p; ++r)
                    for (int c = 0; c < p; ++c, ++k) P(m, k) = image(gr * p + r, gc * p + c);
            }
        }
        return P;
    }

    VisionFeatures forward(const Matrix& image, const std::string& image_id = "") const {
        Matrix P = patches(image);
        VisionFeatures out;
        out.image_id = image_id;
        out.grid = ((P * W_p.transpose()).rowwise() + b_p.transpose()).array().tanh();
        return out;
    }

    struct Grads {
        Matrix dW_p;
        Vector db_p;
    };

    // VJP through tanh and the shared linear map. `grid` must be the value
    // forward() produced for this image.
    Grads backward(const Matrix& image, const Matrix& grid, const Matrix& dgrid) const {
        Matrix P = patches(image);
        Matrix dpre = dgrid.array() * (1.0 - grid.array().square());
        Grads g;
        g.dW_p = dpre.transpose() * P;
        g.db_p = dpre.colwise().sum().transpose();
        return g;
    }

    Matrix W_p;  // (d_v, patch*patch)
    Vector b_p;  // (d_v)

private:
    void check_image(const Matrix& image) const {
        if (image.rows() != spec_.image_h || image.cols() != spec_.image_w)
            throw PreconditionError("encode_image: image is " + std::to_string(image.rows()) +
                                    "x" + std::to_string(image.cols()) + ", spec wants " +
                                    std::to_string(spec_.image_h) + "x" +
                                    std::to_string(spec_.image_w));
        if (image.rows() < spec_.patch || image.cols() < spec_.patch)
            throw PreconditionError("encode_image: image smaller than patch size");
    }

    EncoderSpec spec_;
};

// ---- Golden embedding files ("RAEM") -----------------------------------

inline void save_embedding(const Matrix& m, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        io::write_magic(os, "RAEM");
        io::write_u32(os, 1);  // format version
        io::write_u64(os, static_cast<uint64_t>(m.rows()));
        io::write_u64(os, static_cast<uint64_t>(m.cols()));
        io::write_matrix_data(os, m);
    });
}

inline Matrix load_embedding(const std::filesystem::path& path) {
    auto is = io::open_input(path);
    io::expect_magic(is, "RAEM", "RAEM embedding");
    uint32_t version = io::read_u32(is, "version");
    if (version != 1) throw FormatError("unsupported RAEM version " + std::to_string(version));
    auto rows = static_cast<Eigen::Index>(io::read_u64(is, "rows"));
    auto cols = static_cast<Eigen::Index>(io::read_u64(is, "cols"));
    return io::read_matrix_data(is, rows, cols);
}

}  // namespace radalign
