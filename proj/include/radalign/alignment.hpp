#pragma once

#include "radalign/common.hpp"
#include "radalign/encoders.hpp"
#include "radalign/knowledge.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace radalign {

enum class TaskMode { SingleLabel, MultiLabel };

// K learnable visual concept tokens plus the cross-attention projections.
struct ConceptTokens {
    Matrix z;    // (K, d) queries, one per criterion
    Matrix W_q;  // (d, d)
    Matrix W_k;  // (d_v, d)
    Matrix W_v;  // (d_v, d)

    void init(int K, int d, int d_v, Rng& rng) {
        z.resize(K, d);
        W_q.resize(d, d);
        W_k.resize(d_v, d);
        W_v.resize(d_v, d);
        const double z_std = 1.0;
        const double q_std = 1.0 / std::sqrt(static_cast<double>(d));
        const double kv_std = 1.0 / std::sqrt(static_cast<double>(d_v));
        for (Eigen::Index r = 0; r < z.rows(); ++r)
            for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = z_std * gaussian(rng);
        for (Eigen::Index r = 0; r < W_q.rows(); ++r)
            for (Eigen::Index c = 0; c < W_q.cols(); ++c) W_q(r, c) = q_std * gaussian(rng);
        for (Eigen::Index r = 0; r < W_k.rows(); ++r)
            for (Eigen::Index c = 0; c < W_k.cols(); ++c) W_k(r, c) = kv_std * gaussian(rng);
        for (Eigen::Index r = 0; r < W_v.rows(); ++r)
            for (Eigen::Index c = 0; c < W_v.cols(); ++c) W_v(r, c) = kv_std * gaussian(rng);
    }
};

struct AttendedTokens {
    Matrix z_hat;  // (K, d)
    Matrix attn;   // (K, M), rows are softmax distributions over positions
};

inline Matrix softmax_rows(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        double mx = scores.row(r).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - mx).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    return out;
}

// Intermediate values of one forward pass, kept for backprop.
struct AttentionCache {
    Matrix Q;   // (K, d)
    Matrix Km;  // (M, d)
    Matrix Vm;  // (M, d)
};

// z_hat = softmax(Q K^T / sqrt(d)) V with Q = z W_q, K = feats W_k,
// V = feats W_v; the concept tokens act as the queries.
inline AttendedTokens cross_attend(const ConceptTokens& tokens, const VisionFeatures& feats,
                                   AttentionCache* cache = nullptr) {
    if (tokens.z.cols() != tokens.W_q.rows())
        throw PreconditionError("cross_attend: z width does not match W_q");
    if (feats.grid.cols() != tokens.W_k.rows() || feats.grid.cols() != tokens.W_v.rows())
        throw PreconditionError("cross_attend: feature width does not match W_k/W_v");
    if (tokens.W_q.cols() != tokens.W_k.cols())
        throw PreconditionError("cross_attend: W_q and W_k output widths differ");

    const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.W_q.cols()));
    Matrix Q = tokens.z * tokens.W_q;         // (K, d)
    Matrix Km = feats.grid * tokens.W_k;      // (M, d)
    Matrix Vm = feats.grid * tokens.W_v;      // (M, d)
    AttendedTokens out;
    out.attn = softmax_rows(Q * Km.transpose() * scale);
    out.z_hat = out.attn * Vm;
    if (cache) *cache = {std::move(Q), std::move(Km), std::move(Vm)};
    return out;
}

inline double logsumexp(const Vector& v) {
    double mx = v.maxCoeff();
    return mx + std::log((v.array() - mx).exp().sum());
}

// InfoNCE over one criterion's description block: pulls the attended token
// toward its positive descriptions and away from siblings. sim is the dot
// product; averaged over positives when several descriptions match.
inline double anchor_loss(const Vector& z_hat_i, const Matrix& e_i,
                          const std::vector<int>& positives, double tau) {
    if (positives.empty()) throw PreconditionError("anchor_loss: empty positive set");
    if (tau <= 0) throw PreconditionError("anchor_loss: tau must be positive");
    if (e_i.cols() != z_hat_i.size())
        throw PreconditionError("anchor_loss: embedding width mismatch");
    Vector u = (e_i * z_hat_i) / tau;  // (n_i)
    double lse = logsumexp(u);
    double loss = 0.0;
    for (int p : positives) {
        if (p < 0 || p >= u.size())
            throw PreconditionError("anchor_loss: positive index out of range");
        loss += lse - u(p);
    }
    return loss / static_cast<double>(positives.size());
}

// Per-criterion similarity blocks s_i = e_i z_hat_i, concatenated in
// criterion order with description order inside each block.
struct SimilarityVector {
    std::vector<Vector> blocks;  // block i has length n_i
    Vector concat;               // length sum n_i

    int block_offset(int i) const {
        int off = 0;
        for (int j = 0; j < i; ++j) off += static_cast<int>(blocks[static_cast<size_t>(j)].size());
        return off;
    }
};

inline SimilarityVector similarities(const AttendedTokens& att,
                                     const std::vector<TextEmbedding>& anchors) {
    if (att.z_hat.rows() != static_cast<Eigen::Index>(anchors.size()))
        throw PreconditionError("similarities: K mismatch between tokens and anchors");
    SimilarityVector out;
    int total = 0;
    for (const auto& a : anchors) total += static_cast<int>(a.matrix.rows());
    out.concat.resize(total);
    int off = 0;
    for (size_t i = 0; i < anchors.size(); ++i) {
        const Matrix& e = anchors[i].matrix;
        if (e.cols() != att.z_hat.cols())
            throw PreconditionError("similarities: embedding width mismatch at criterion " +
                                    std::to_string(i));
        Vector block = e * att.z_hat.row(static_cast<Eigen::Index>(i)).transpose();
        out.concat.segment(off, block.size()) = block;
        off += static_cast<int>(block.size());
        out.blocks.push_back(std::move(block));
    }
    return out;
}

// Linear head over the concatenated similarities; each weight is
// attributable to one named concept description.
struct ClassifierHead {
    Matrix W;  // (N, sum n_i)
    Vector b;  // (N)
    bool use_bias = true;

    void init(int N, int total_descriptions, Rng& rng) {
        W.resize(N, total_descriptions);
        b = Vector::Zero(N);
        const double std = 1.0 / std::sqrt(static_cast<double>(total_descriptions));
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = std * gaussian(rng);
    }
};

inline double stable_sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct Classification {
    Vector logits;  // (N)
    Vector scores;  // sigmoid per class (multi-label) or softmax (single-label)
};

inline Classification classify(const SimilarityVector& s, const ClassifierHead& head,
                               TaskMode mode) {
    if (head.W.cols() != s.concat.size())
        throw PreconditionError("classify: head expects " + std::to_string(head.W.cols()) +
                                " similarities, got " + std::to_string(s.concat.size()));
    Classification out;
    out.logits = head.W * s.concat;
    if (head.use_bias) out.logits += head.b;
    if (mode == TaskMode::MultiLabel) {
        out.scores.resize(out.logits.size());
        for (Eigen::Index i = 0; i < out.logits.size(); ++i)
            out.scores(i) = stable_sigmoid(out.logits(i));
    } else {
        double lse = logsumexp(out.logits);
        out.scores = (out.logits.array() - lse).exp().matrix();
    }
    return out;
}

inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// y is multi-hot in multi-label mode, one-hot in single-label mode.
// Multi-label: mean binary cross-entropy over classes. Single-label:
// softmax cross-entropy.
inline double cross_entropy(const Vector& logits, const Vector& y, TaskMode mode) {
    if (logits.size() != y.size())
        throw PreconditionError("cross_entropy: logits/target length mismatch");
    if (mode == TaskMode::MultiLabel) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < logits.size(); ++i)
            total += y(i) * softplus(-logits(i)) + (1.0 - y(i)) * softplus(logits(i));
        return total / static_cast<double>(logits.size());
    }
    return logsumexp(logits) - logits.dot(y);
}

inline Vector cross_entropy_grad(const Vector& logits, const Vector& y, TaskMode mode) {
    Vector g(logits.size());
    if (mode == TaskMode::MultiLabel) {
        for (Eigen::Index i = 0; i < logits.size(); ++i)
            g(i) = (stable_sigmoid(logits(i)) - y(i)) / static_cast<double>(logits.size());
    } else {
        double lse = logsumexp(logits);
        g = (logits.array() - lse).exp().matrix() - y;
    }
    return g;
}

// L_total = L_ce + (1/K) sum_i L_anchor^i
inline double total_loss(const Vector& logits, const Vector& y,
                         const std::vector<double>& per_criterion_anchor_losses, TaskMode mode) {
    if (per_criterion_anchor_losses.empty())
        throw PreconditionError("total_loss: anchor loss list is empty");
    double anchor = 0.0;
    for (double a : per_criterion_anchor_losses) anchor += a;
    anchor /= static_cast<double>(per_criterion_anchor_losses.size());
    return cross_entropy(logits, y, mode) + anchor;
}

// ---- The aligned model --------------------------------------------------

struct Finding {
    int criterion_id = 0;
    std::string criterion_name;
    int description_index = 0;
    std::string text;
    double similarity = 0.0;
};

using FindingSet = std::vector<Finding>;

struct AlignModel {
    EncoderSpec spec;
    CriterionSet criteria;
    VisionEncoder vision;
    ConceptTokens tokens;
    ClassifierHead head;
    std::vector<TextEmbedding> anchors;  // frozen text anchors, one per criterion
    TaskMode task_mode = TaskMode::MultiLabel;
    double tau = 0.07;
    uint64_t fingerprint = 0;  // checkpoint fingerprint; 0 until saved or loaded

    int K() const { return criteria.num_criteria(); }
    int N() const { return criteria.num_labels(); }

    static AlignModel init(const EncoderSpec& spec, const CriterionSet& criteria,
                           TaskMode task_mode, double tau, bool use_bias, uint64_t seed) {
        spec.validate();
        if (criteria.num_criteria() < 1)
            throw PreconditionError("AlignModel: criteria set is empty");
        AlignModel m;
        m.spec = spec;
        m.criteria = criteria;
        m.task_mode = task_mode;
        m.tau = tau;
        m.vision = VisionEncoder(spec);
        Rng rng(seed);
        m.vision.init(rng);
        m.tokens.init(criteria.num_criteria(), spec.d, spec.d_v, rng);
        m.head.init(criteria.num_labels(), criteria.total_descriptions(), rng);
        m.head.use_bias = use_bias;
        m.anchors = compute_anchors(spec, criteria);
        return m;
    }

    // Text anchors are computed once from the frozen text encoder and never
    // touched by training.
    static std::vector<TextEmbedding> compute_anchors(const EncoderSpec& spec,
                                                      const CriterionSet& criteria) {
        std::vector<TextEmbedding> anchors;
        anchors.reserve(static_cast<size_t>(criteria.num_criteria()));
        for (const auto& c : criteria.criteria) {
            std::vector<std::string> texts;
            texts.reserve(c.descriptions.size());
            for (const auto& d : c.descriptions) texts.push_back(d.text);
            anchors.push_back(encode_text(texts, spec, c.id));
        }
        return anchors;
    }

    Vector multi_hot(const std::set<int>& labels) const {
        Vector y = Vector::Zero(N());
        for (int l : labels) {
            if (l < 0 || l >= N())
                throw PreconditionError("label id " + std::to_string(l) + " out of range");
            y(l) = 1.0;
        }
        return y;
    }
};

struct InferenceResult {
    AttendedTokens attended;
    SimilarityVector sims;
    Vector logits;
    Vector scores;
    FindingSet findings;
};

// Per-criterion argmax over the similarity block; ties broken by the lowest
// description index. This is the factual content handed to prompting.
inline FindingSet findings_from_similarities(const SimilarityVector& sims,
                                             const CriterionSet& criteria) {
    FindingSet out;
    for (size_t i = 0; i < sims.blocks.size(); ++i) {
        const Vector& block = sims.blocks[i];
        int best = 0;
        for (int j = 1; j < block.size(); ++j)
            if (block(j) > block(best)) best = j;
        const auto& crit = criteria.criteria[i];
        out.push_back({crit.id, crit.name, best,
                       crit.descriptions[static_cast<size_t>(best)].text, block(best)});
    }
    return out;
}

inline InferenceResult infer(const AlignModel& model, const Matrix& image,
                             const std::string& image_id = "") {
    InferenceResult r;
    VisionFeatures feats = model.vision.forward(image, image_id);
    r.attended = cross_attend(model.tokens, feats);
    r.sims = similarities(r.attended, model.anchors);
    Classification cls = classify(r.sims, model.head, model.task_mode);
    r.logits = std::move(cls.logits);
    r.scores = std::move(cls.scores);
    r.findings = findings_from_similarities(r.sims, model.criteria);
    return r;
}

}  // namespace radalign
