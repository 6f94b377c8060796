#pragma once

#include "radalign/alignment.hpp"
#include "radalign/datagen.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <vector>

namespace radalign {

struct TrainConfig {
    int epochs = 40;
    double lr_initial = 1e-3;
    double lr_final = 1e-4;
    int lr_switch_epoch = 20;     // epoch index at which the lr drops
    double weight_decay = 1e-4;
    double tau = 0.07;
    uint64_t seed = 0;
    int batch_size = 16;
    TaskMode task_mode = TaskMode::MultiLabel;
    bool use_bias = true;

    void validate() const {
        if (epochs < 1) throw PreconditionError("TrainConfig: epochs must be >= 1");
        if (lr_initial <= 0 || lr_final <= 0)
            throw PreconditionError("TrainConfig: learning rates must be positive");
        if (tau <= 0) throw PreconditionError("TrainConfig: tau must be positive");
        if (batch_size < 1) throw PreconditionError("TrainConfig: batch_size must be >= 1");
        if (weight_decay < 0) throw PreconditionError("TrainConfig: weight_decay must be >= 0");
    }

    double lr_at(int epoch) const { return epoch < lr_switch_epoch ? lr_initial : lr_final; }
};

// Gradients for every trainable group. Text anchors have no slot here;
// they are frozen by construction.
struct ModelGrads {
    Matrix dW_p;
    Vector db_p;
    Matrix dz, dW_q, dW_k, dW_v;
    Matrix dW;
    Vector db;

    static ModelGrads zeros_like(const AlignModel& m) {
        ModelGrads g;
        g.dW_p = Matrix::Zero(m.vision.W_p.rows(), m.vision.W_p.cols());
        g.db_p = Vector::Zero(m.vision.b_p.size());
        g.dz = Matrix::Zero(m.tokens.z.rows(), m.tokens.z.cols());
        g.dW_q = Matrix::Zero(m.tokens.W_q.rows(), m.tokens.W_q.cols());
        g.dW_k = Matrix::Zero(m.tokens.W_k.rows(), m.tokens.W_k.cols());
        g.dW_v = Matrix::Zero(m.tokens.W_v.rows(), m.tokens.W_v.cols());
        g.dW = Matrix::Zero(m.head.W.rows(), m.head.W.cols());
        g.db = Vector::Zero(m.head.b.size());
        return g;
    }

    void add(const ModelGrads& o) {
        dW_p += o.dW_p;
        db_p += o.db_p;
        dz += o.dz;
        dW_q += o.dW_q;
        dW_k += o.dW_k;
        dW_v += o.dW_v;
        dW += o.dW;
        db += o.db;
    }

    void scale(double s) {
        dW_p *= s;
        db_p *= s;
        dz *= s;
        dW_q *= s;
        dW_k *= s;
        dW_v *= s;
        dW *= s;
        db *= s;
    }
};

struct LossParts {
    double ce = 0.0;
    double anchor = 0.0;  // (1/K) sum of per-criterion anchor losses
    double total() const { return ce + anchor; }
};

// Forward + analytic backward for one example. y is multi-hot (multi-label)
// or one-hot (single-label); positives come from knowledge::positives_for.
inline LossParts example_loss_and_grads(const AlignModel& model, const Matrix& image,
                                        const Vector& y,
                                        const std::vector<std::vector<int>>& positives,
                                        double tau, ModelGrads* grads) {
    const int K = model.K();
    const double scale = 1.0 / std::sqrt(static_cast<double>(model.spec.d));

    VisionFeatures feats = model.vision.forward(image);
    AttentionCache ac;
    AttendedTokens att = cross_attend(model.tokens, feats, &ac);
    SimilarityVector sims = similarities(att, model.anchors);
    Classification cls = classify(sims, model.head, model.task_mode);

    LossParts loss;
    loss.ce = cross_entropy(cls.logits, y, model.task_mode);
    std::vector<double> anchor_losses(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        anchor_losses[static_cast<size_t>(i)] =
            anchor_loss(att.z_hat.row(i).transpose(), model.anchors[static_cast<size_t>(i)].matrix,
                        positives[static_cast<size_t>(i)], tau);
        loss.anchor += anchor_losses[static_cast<size_t>(i)] / K;
    }
    if (!grads) return loss;

    // Classifier head.
    Vector dlogits = cross_entropy_grad(cls.logits, y, model.task_mode);
    grads->dW += dlogits * sims.concat.transpose();
    if (model.head.use_bias) grads->db += dlogits;
    Vector ds = model.head.W.transpose() * dlogits;

    // d z_hat: cross-entropy path via the similarity blocks, plus the
    // anchor InfoNCE path (softmax over the block divided by tau).
    Matrix dZ = Matrix::Zero(K, model.spec.d);
    int off = 0;
    for (int i = 0; i < K; ++i) {
        const Matrix& e = model.anchors[static_cast<size_t>(i)].matrix;
        const int n_i = static_cast<int>(e.rows());
        Vector ds_block = ds.segment(off, n_i);
        off += n_i;

        Vector u = sims.blocks[static_cast<size_t>(i)] / tau;
        double mx = u.maxCoeff();
        Eigen::ArrayXd ex = (u.array() - mx).exp();
        Vector q = (ex / ex.sum()).matrix();
        Vector pbar = Vector::Zero(n_i);
        const auto& pos = positives[static_cast<size_t>(i)];
        for (int p : pos) pbar(p) += 1.0 / static_cast<double>(pos.size());

        Vector coeff = ds_block + (q - pbar) / (tau * static_cast<double>(K));
        dZ.row(i) = (e.transpose() * coeff).transpose();
    }

    // Attention backward.
    Matrix dA = dZ * ac.Vm.transpose();            // (K, M)
    Matrix dVm = att.attn.transpose() * dZ;        // (M, d)
    Matrix dS(dA.rows(), dA.cols());
    for (Eigen::Index r = 0; r < dA.rows(); ++r) {
        double dot = dA.row(r).dot(att.attn.row(r));
        dS.row(r) = att.attn.row(r).cwiseProduct((dA.row(r).array() - dot).matrix());
    }
    Matrix dQ = scale * dS * ac.Km;                // (K, d)
    Matrix dKm = scale * dS.transpose() * ac.Q;    // (M, d)

    grads->dz += dQ * model.tokens.W_q.transpose();
    grads->dW_q += model.tokens.z.transpose() * dQ;
    grads->dW_k += feats.grid.transpose() * dKm;
    grads->dW_v += feats.grid.transpose() * dVm;

    // Vision encoder backward.
    Matrix dG = dKm * model.tokens.W_k.transpose() + dVm * model.tokens.W_v.transpose();
    auto vg = model.vision.backward(image, feats.grid, dG);
    grads->dW_p += vg.dW_p;
    grads->db_p += vg.db_p;

    return loss;
}

// ---- AdamW -----------------------------------------------------------

class AdamW {
public:
    AdamW(const AlignModel& model, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        auto zero = ModelGrads::zeros_like(model);
        m_ = zero;
        v_ = zero;
    }

    void step(AlignModel& model, const ModelGrads& g, double lr, double weight_decay) {
        ++t_;
        update(model.vision.W_p, m_.dW_p, v_.dW_p, g.dW_p, lr, weight_decay);
        update_vec(model.vision.b_p, m_.db_p, v_.db_p, g.db_p, lr, weight_decay);
        update(model.tokens.z, m_.dz, v_.dz, g.dz, lr, weight_decay);
        update(model.tokens.W_q, m_.dW_q, v_.dW_q, g.dW_q, lr, weight_decay);
        update(model.tokens.W_k, m_.dW_k, v_.dW_k, g.dW_k, lr, weight_decay);
        update(model.tokens.W_v, m_.dW_v, v_.dW_v, g.dW_v, lr, weight_decay);
        update(model.head.W, m_.dW, v_.dW, g.dW, lr, weight_decay);
        if (model.head.use_bias) update_vec(model.head.b, m_.db, v_.db, g.db, lr, weight_decay);
    }

private:
    void update(Matrix& p, Matrix& m, Matrix& v, const Matrix& g, double lr, double wd) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        Matrix mhat = m / bc1;
        Matrix vhat = v / bc2;
        p -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        if (wd > 0) p -= lr * wd * p;  // decoupled weight decay
    }

    void update_vec(Vector& p, Vector& m, Vector& v, const Vector& g, double lr, double wd) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        Vector mhat = m / bc1;
        Vector vhat = v / bc2;
        p -= lr * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        if (wd > 0) p -= lr * wd * p;
    }

    double beta1_, beta2_, eps_;
    int t_ = 0;
    ModelGrads m_, v_;
};

// ---- Training loop -----------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double ce = 0.0;
    double anchor = 0.0;
    double total = 0.0;
};

struct TrainTrace {
    std::vector<EpochStats> epochs;

    double initial_total() const { return epochs.empty() ? 0.0 : epochs.front().total; }
    double final_total() const { return epochs.empty() ? 0.0 : epochs.back().total; }
};

namespace detail {

// Hand-rolled Fisher-Yates; std::shuffle's draw sequence is not portable.
inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace detail

// Optimizes the vision encoder, concept tokens, attention projections and
// the classifier head. Text anchors are precomputed in the model and never
// updated. Deterministic for a fixed seed and config.
inline TrainTrace train(AlignModel& model, const std::vector<Example>& dataset,
                        const CriterionSet& criteria, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw PreconditionError("train: dataset is empty");
    for (const auto& v : validate_criteria(criteria))
        if (!v.warning) throw PreconditionError("train: criteria invalid: " + v.message);
    model.task_mode = config.task_mode;
    model.tau = config.tau;
    model.head.use_bias = config.use_bias;

    const int n = static_cast<int>(dataset.size());
    const int K = model.K();

    // Targets and anchor positives are label-derived and fixed per example.
    std::vector<Vector> targets(static_cast<size_t>(n));
    std::vector<std::vector<std::vector<int>>> positives(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& ex = dataset[static_cast<size_t>(i)];
        if (config.task_mode == TaskMode::SingleLabel && ex.labels.size() != 1)
            throw PreconditionError("train: single-label mode requires exactly one label, example " +
                                    ex.id + " has " + std::to_string(ex.labels.size()));
        targets[static_cast<size_t>(i)] = model.multi_hot(ex.labels);
        auto& pos = positives[static_cast<size_t>(i)];
        pos.resize(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k)
            pos[static_cast<size_t>(k)] = positives_for(criteria, k, ex.labels);
    }

    AdamW opt(model);
    Rng rng(config.seed ^ 0x7261646c69676eull);  // distinct stream from init
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    TrainTrace trace;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        detail::shuffle_indices(order, rng);
        double ep_ce = 0.0, ep_anchor = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int bsz = std::min(config.batch_size, n - start);
            ModelGrads grads = ModelGrads::zeros_like(model);
            double batch_total = 0.0;
            for (int b = 0; b < bsz; ++b) {
                int i = order[static_cast<size_t>(start + b)];
                LossParts lp = example_loss_and_grads(
                    model, dataset[static_cast<size_t>(i)].image, targets[static_cast<size_t>(i)],
                    positives[static_cast<size_t>(i)], config.tau, &grads);
                ep_ce += lp.ce;
                ep_anchor += lp.anchor;
                batch_total += lp.total();
            }
            if (!std::isfinite(batch_total)) {
                std::ostringstream ids;
                for (int b = 0; b < bsz; ++b)
                    ids << (b ? "," : "")
                        << dataset[static_cast<size_t>(order[static_cast<size_t>(start + b)])].id;
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(start / config.batch_size) + ", examples [" +
                                 ids.str() + "]");
            }
            grads.scale(1.0 / bsz);
            opt.step(model, grads, config.lr_at(epoch), config.weight_decay);
        }
        EpochStats st;
        st.epoch = epoch;
        st.ce = ep_ce / n;
        st.anchor = ep_anchor / n;
        st.total = st.ce + st.anchor;
        trace.epochs.push_back(st);
    }
    return trace;
}

inline void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        os << "epoch,ce_loss,anchor_loss,total\n";
        char buf[160];
        for (const auto& e : trace.epochs) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.ce, e.anchor,
                          e.total);
            os << buf;
        }
    });
}

// ---- Checkpoint ("RALN") -------------------------------------------------
//
// magic, u32 version, u32 block count, then named blocks:
//   name string, u32 ndim, u64 dims..., row-major float64 data.

namespace detail {

inline void write_block(std::ostream& os, const std::string& name, const Matrix& m) {
    io::write_string(os, name);
    io::write_u32(os, 2);
    io::write_u64(os, static_cast<uint64_t>(m.rows()));
    io::write_u64(os, static_cast<uint64_t>(m.cols()));
    io::write_matrix_data(os, m);
}

inline void write_block(std::ostream& os, const std::string& name, const Vector& v) {
    io::write_string(os, name);
    io::write_u32(os, 1);
    io::write_u64(os, static_cast<uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(os, v(i));
}

struct Block {
    std::vector<uint64_t> dims;
    std::vector<double> data;

    Matrix as_matrix() const {
        if (dims.size() != 2) throw FormatError("checkpoint block is not 2-d");
        Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
        size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
        return m;
    }

    Vector as_vector() const {
        if (dims.size() != 1) throw FormatError("checkpoint block is not 1-d");
        Vector v(static_cast<Eigen::Index>(dims[0]));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = data[static_cast<size_t>(i)];
        return v;
    }
};

inline std::map<std::string, Block> read_blocks(std::istream& is) {
    io::expect_magic(is, "RALN", "RALN checkpoint");
    uint32_t version = io::read_u32(is, "version");
    if (version != 1) throw FormatError("unsupported RALN version " + std::to_string(version));
    uint32_t count = io::read_u32(is, "block count");
    std::map<std::string, Block> blocks;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = io::read_string(is, "block name");
        uint32_t ndim = io::read_u32(is, "ndim");
        Block b;
        uint64_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            b.dims.push_back(io::read_u64(is, "dim"));
            total *= b.dims.back();
        }
        io::expect_payload(is, total * 8, ("block '" + name + "'").c_str());
        b.data.resize(total);
        for (uint64_t k = 0; k < total; ++k) b.data[k] = io::read_f64(is, "block data");
        blocks[name] = std::move(b);
    }
    return blocks;
}

}  // namespace detail

inline void save_checkpoint(AlignModel& model, const std::filesystem::path& path) {
    io::atomic_write(path, [&](std::ostream& os) {
        io::write_magic(os, "RALN");
        io::write_u32(os, 1);
        const int K = model.K();
        io::write_u32(os, static_cast<uint32_t>(10 + K));

        Vector meta(11);
        meta << model.spec.d, model.spec.d_v, model.spec.patch, model.spec.image_h,
            model.spec.image_w, static_cast<double>(model.spec.seed & 0xffffffffull),
            static_cast<double>(model.spec.seed >> 32), model.tau,
            model.task_mode == TaskMode::MultiLabel ? 1.0 : 0.0, model.head.use_bias ? 1.0 : 0.0,
            static_cast<double>(model.N());
        detail::write_block(os, "meta.scalars", meta);

        Vector sizes(K);
        auto bs = model.criteria.block_sizes();
        for (int i = 0; i < K; ++i) sizes(i) = bs[static_cast<size_t>(i)];
        detail::write_block(os, "meta.block_sizes", sizes);

        detail::write_block(os, "vision.W_p", model.vision.W_p);
        detail::write_block(os, "vision.b_p", model.vision.b_p);
        detail::write_block(os, "tokens.z", model.tokens.z);
        detail::write_block(os, "attn.W_q", model.tokens.W_q);
        detail::write_block(os, "attn.W_k", model.tokens.W_k);
        detail::write_block(os, "attn.W_v", model.tokens.W_v);
        detail::write_block(os, "head.W", model.head.W);
        detail::write_block(os, "head.b", model.head.b);
        for (int i = 0; i < K; ++i)
            detail::write_block(os, "anchors.e" + std::to_string(i),
                                model.anchors[static_cast<size_t>(i)].matrix);
    });
    model.fingerprint = io::file_fingerprint(path);
}

inline AlignModel load_checkpoint(const std::filesystem::path& path,
                                  const CriterionSet& criteria) {
    auto is = io::open_input(path);
    auto blocks = detail::read_blocks(is);
    auto get = [&](const std::string& name) -> const detail::Block& {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw FormatError("checkpoint missing block '" + name + "'");
        return it->second;
    };

    Vector meta = get("meta.scalars").as_vector();
    if (meta.size() != 11) throw FormatError("checkpoint meta.scalars has wrong length");
    AlignModel m;
    m.spec.d = static_cast<int>(meta(0));
    m.spec.d_v = static_cast<int>(meta(1));
    m.spec.patch = static_cast<int>(meta(2));
    m.spec.image_h = static_cast<int>(meta(3));
    m.spec.image_w = static_cast<int>(meta(4));
    m.spec.seed = static_cast<uint64_t>(meta(5)) | (static_cast<uint64_t>(meta(6)) << 32);
    m.tau = meta(7);
    m.task_mode = meta(8) != 0.0 ? TaskMode::MultiLabel : TaskMode::SingleLabel;
    m.criteria = criteria;

    Vector sizes = get("meta.block_sizes").as_vector();
    if (sizes.size() != criteria.num_criteria())
        throw FormatError("checkpoint has " + std::to_string(sizes.size()) +
                          " criteria, criteria file has " +
                          std::to_string(criteria.num_criteria()));
    auto bs = criteria.block_sizes();
    for (Eigen::Index i = 0; i < sizes.size(); ++i)
        if (static_cast<int>(sizes(i)) != bs[static_cast<size_t>(i)])
            throw FormatError("checkpoint block size mismatch at criterion " + std::to_string(i) +
                              ": checkpoint " + std::to_string(static_cast<int>(sizes(i))) +
                              " vs criteria file " + std::to_string(bs[static_cast<size_t>(i)]));
    if (static_cast<int>(meta(10)) != criteria.num_labels())
        throw FormatError("checkpoint label count mismatch vs criteria file");

    m.vision = VisionEncoder(m.spec);
    m.vision.W_p = get("vision.W_p").as_matrix();
    m.vision.b_p = get("vision.b_p").as_vector();
    m.tokens.z = get("tokens.z").as_matrix();
    m.tokens.W_q = get("attn.W_q").as_matrix();
    m.tokens.W_k = get("attn.W_k").as_matrix();
    m.tokens.W_v = get("attn.W_v").as_matrix();
    m.head.W = get("head.W").as_matrix();
    m.head.b = get("head.b").as_vector();
    m.head.use_bias = meta(9) != 0.0;
    for (int i = 0; i < criteria.num_criteria(); ++i) {
        TextEmbedding e;
        e.criterion_id = i;
        e.matrix = get("anchors.e" + std::to_string(i)).as_matrix();
        m.anchors.push_back(std::move(e));
    }
    m.fingerprint = io::file_fingerprint(path);
    return m;
}

}  // namespace radalign
