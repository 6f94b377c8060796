// Acceptance suite: runs every acceptance criterion end to end and prints
// one [PASS]/[FAIL] line per criterion. Exit code is the number of
// failures.

#include "helpers.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

using namespace radalign;

namespace {

struct Check {
    int failures = 0;
    std::ostringstream detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            ++failures;
            detail << (detail.tellp() > 0 ? "; " : "") << what;
        }
    }
    void note(const std::string& s) {
        detail << (detail.tellp() > 0 ? "; " : "") << s;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

CriterionSet random_criteria(Rng& rng) {
    CriterionSet cs;
    cs.version = "rand";
    int n_labels = 2 + static_cast<int>(rng() % 4);
    for (int l = 0; l < n_labels; ++l)
        cs.labels.push_back({l, "L" + std::to_string(l), "Label" + std::to_string(l)});
    int K = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < K; ++k) {
        Criterion c;
        c.id = k;
        c.name = "Criterion" + std::to_string(k);
        int n_desc = 1 + static_cast<int>(rng() % 4);
        for (int j = 0; j < n_desc; ++j) {
            ConceptDescription d;
            d.criterion_id = k;
            d.local_id = j;
            d.text = "concept word" + std::to_string(k) + " token" + std::to_string(j);
            for (int l = 0; l < n_labels; ++l)
                if (uniform01(rng) < 0.4) d.diseases.insert(l);
            c.descriptions.push_back(d);
        }
        cs.criteria.push_back(c);
    }
    return cs;
}

// ---- criterion 1: oracle equivalence ------------------------------------

Check criterion1() {
    Check c;
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    const double tol = 1e-10;

    double max_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto cs = random_criteria(rng);
        EncoderSpec spec;
        spec.d = 2 + static_cast<int>(rng() % 7);      // <= 8
        spec.d_v = 2 + static_cast<int>(rng() % 7);    // <= 8
        spec.patch = 4;
        int grid = 1 + static_cast<int>(rng() % 4);    // M <= 16
        spec.image_h = spec.image_w = 4 * grid;
        spec.seed = rng();
        TaskMode mode = (rng() % 2) ? TaskMode::MultiLabel : TaskMode::SingleLabel;
        auto model = AlignModel::init(spec, cs, mode, 0.07, true, rng());

        Rng drng(rng());
        Matrix image = testutil::random_matrix(spec.image_h, spec.image_w, drng);
        std::set<int> labels;
        if (mode == TaskMode::SingleLabel) {
            labels.insert(static_cast<int>(drng() % cs.num_labels()));
        } else {
            for (int l = 0; l < cs.num_labels(); ++l)
                if (uniform01(drng) < 0.4) labels.insert(l);
        }

        // Implementation path.
        VisionFeatures feats = model.vision.forward(image);
        AttendedTokens att = cross_attend(model.tokens, feats);
        SimilarityVector sims = similarities(att, model.anchors);
        Classification cls = classify(sims, model.head, mode);
        std::vector<std::vector<int>> positives;
        std::vector<double> anchor_list;
        for (int k = 0; k < model.K(); ++k) {
            positives.push_back(positives_for(cs, k, labels));
            anchor_list.push_back(anchor_loss(att.z_hat.row(k).transpose(),
                                              model.anchors[static_cast<size_t>(k)].matrix,
                                              positives.back(), 0.07));
        }
        Vector y = model.multi_hot(labels);
        double total = total_loss(cls.logits, y, anchor_list, mode);

        // Oracle path.
        auto att_ref = oracle::cross_attention(
            oracle::from_eigen(model.tokens.z), oracle::from_eigen(model.tokens.W_q),
            oracle::from_eigen(model.tokens.W_k), oracle::from_eigen(model.tokens.W_v),
            oracle::from_eigen(feats.grid));
        for (int i = 0; i < model.K(); ++i)
            for (int j = 0; j < spec.d; ++j)
                max_err = std::max(max_err, std::abs(att.z_hat(i, j) - att_ref.z_hat[i][j]));

        std::vector<oracle::Mat> anchor_mats;
        for (const auto& a : model.anchors) anchor_mats.push_back(oracle::from_eigen(a.matrix));
        auto sims_ref = oracle::similarities(att_ref.z_hat, anchor_mats);
        for (Eigen::Index i = 0; i < sims.concat.size(); ++i)
            max_err = std::max(max_err,
                               std::abs(sims.concat(i) - sims_ref[static_cast<size_t>(i)]));

        auto logits_ref = oracle::linear(oracle::from_eigen(model.head.W), sims_ref,
                                         oracle::from_eigen(model.head.b));
        for (Eigen::Index i = 0; i < cls.logits.size(); ++i)
            max_err = std::max(max_err,
                               std::abs(cls.logits(i) - logits_ref[static_cast<size_t>(i)]));

        double ce_ref = mode == TaskMode::MultiLabel
                            ? oracle::bce_mean(logits_ref, oracle::from_eigen(y))
                            : oracle::softmax_ce(logits_ref, oracle::from_eigen(y));
        double anchor_ref = 0.0;
        size_t off = 0;
        for (int i = 0; i < model.K(); ++i) {
            size_t n_i = anchor_mats[static_cast<size_t>(i)].size();
            oracle::Vec block(sims_ref.begin() + static_cast<long>(off),
                              sims_ref.begin() + static_cast<long>(off + n_i));
            off += n_i;
            anchor_ref += oracle::anchor_loss(block, positives[static_cast<size_t>(i)], 0.07);
        }
        anchor_ref /= model.K();
        max_err = std::max(max_err, std::abs(total - (ce_ref + anchor_ref)));
    }
    c.expect(max_err < tol, "forward-path max error " + fmt(max_err));

    // query_topk vs exhaustive sort, 100 instances up to 1000 entries.
    double topk_mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + static_cast<int>(rng() % 1000);
        int K = 1 + static_cast<int>(rng() % 5);
        int d = 2 + static_cast<int>(rng() % 7);
        int k = 1 + static_cast<int>(rng() % 10);
        ReportIndex index;
        std::vector<oracle::Mat> tokens;
        for (int e = 0; e < n; ++e) {
            IndexEntry entry;
            entry.entry_id = e;
            entry.tokens = testutil::random_matrix(K, d, rng);
            entry.report = "r" + std::to_string(e);
            tokens.push_back(oracle::from_eigen(entry.tokens));
            index.entries.push_back(std::move(entry));
        }
        if (n > 3) {  // force ties
            index.entries[1].tokens = index.entries[3].tokens;
            tokens[1] = tokens[3];
        }
        Matrix query = testutil::random_matrix(K, d, rng);
        auto hits = query_topk(index, query, k);
        auto ref = oracle::topk(tokens, oracle::from_eigen(query), k);
        if (hits.size() != ref.size()) {
            ++topk_mismatches;
            continue;
        }
        for (size_t i = 0; i < hits.size(); ++i)
            if (hits[i].entry_id != ref[i].entry_id ||
                std::abs(hits[i].score - ref[i].score) > 1e-10)
                ++topk_mismatches;
    }
    c.expect(topk_mismatches == 0, "query_topk mismatches: " + fmt(topk_mismatches));

    double elapsed = seconds_since(t0);
    c.expect(elapsed < 30.0, "runtime " + fmt(elapsed) + "s >= 30s");
    c.note("max fwd err " + fmt(max_err) + ", " + fmt(elapsed) + "s");
    return c;
}

// ---- criterion 2: gradient suite -----------------------------------------

struct GradProblem {
    AlignModel model;
    Matrix image;
    Vector y;
    std::vector<std::vector<int>> positives;
    double tau = 0.07;
};

double loss_of(const GradProblem& p) {
    return example_loss_and_grads(p.model, p.image, p.y, p.positives, p.tau, nullptr).total();
}

Check criterion2() {
    Check c;
    auto t0 = std::chrono::steady_clock::now();
    double worst_rel = 0.0;
    for (TaskMode mode : {TaskMode::MultiLabel, TaskMode::SingleLabel}) {
        GradProblem p;
        auto cs = testutil::tiny_criteria();
        EncoderSpec spec;
        spec.d = 6;
        spec.d_v = 5;
        spec.patch = 4;
        spec.image_h = 8;
        spec.image_w = 8;
        spec.seed = 13;
        p.model = AlignModel::init(spec, cs, mode, p.tau, true, 77);
        Rng rng(800 + static_cast<int>(mode));
        p.image = testutil::random_matrix(8, 8, rng);
        std::set<int> labels = mode == TaskMode::SingleLabel ? std::set<int>{1}
                                                             : std::set<int>{0, 1};
        p.y = p.model.multi_hot(labels);
        for (int k = 0; k < p.model.K(); ++k)
            p.positives.push_back(positives_for(cs, k, labels));

        ModelGrads g = ModelGrads::zeros_like(p.model);
        example_loss_and_grads(p.model, p.image, p.y, p.positives, p.tau, &g);

        struct Group {
            const char* name;
            double* data;
            Eigen::Index count;
            const double* analytic;
        };
        auto& m = p.model;
        std::vector<Group> groups = {
            {"vision.W_p", m.vision.W_p.data(), m.vision.W_p.size(), g.dW_p.data()},
            {"vision.b_p", m.vision.b_p.data(), m.vision.b_p.size(), g.db_p.data()},
            {"tokens.z", m.tokens.z.data(), m.tokens.z.size(), g.dz.data()},
            {"attn.W_q", m.tokens.W_q.data(), m.tokens.W_q.size(), g.dW_q.data()},
            {"attn.W_k", m.tokens.W_k.data(), m.tokens.W_k.size(), g.dW_k.data()},
            {"attn.W_v", m.tokens.W_v.data(), m.tokens.W_v.size(), g.dW_v.data()},
            {"head.W", m.head.W.data(), m.head.W.size(), g.dW.data()},
            {"head.b", m.head.b.data(), m.head.b.size(), g.db.data()},
        };
        const double h = 1e-5;
        for (auto& grp : groups) {
            std::vector<Eigen::Index> picks;
            if (grp.count <= 20) {
                for (Eigen::Index i = 0; i < grp.count; ++i) picks.push_back(i);
            } else {
                for (int i = 0; i < 20; ++i)
                    picks.push_back(
                        static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(grp.count)));
            }
            for (Eigen::Index idx : picks) {
                double orig = grp.data[idx];
                grp.data[idx] = orig + h;
                double up = loss_of(p);
                grp.data[idx] = orig - h;
                double down = loss_of(p);
                grp.data[idx] = orig;
                double numeric = (up - down) / (2 * h);
                double a = grp.analytic[idx];
                double rel =
                    std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
                worst_rel = std::max(worst_rel, rel);
                if (rel >= 1e-3)
                    c.expect(false, std::string(grp.name) + "[" + std::to_string(idx) +
                                        "] rel err " + fmt(rel));
            }
        }
    }
    double elapsed = seconds_since(t0);
    c.expect(elapsed < 60.0, "runtime " + fmt(elapsed) + "s >= 60s");
    c.note("worst rel err " + fmt(worst_rel) + ", " + fmt(elapsed) + "s");
    return c;
}

// ---- criterion 3: anchor-loss analytics ----------------------------------

Check criterion3() {
    Check c;
    Vector z1(3);
    z1 << 0.4, -0.7, 1.1;
    Matrix e1(1, 3);
    e1 << 0.2, 0.3, -0.1;
    c.expect(anchor_loss(z1, e1, {0}, 0.07) == 0.0, "n=1 loss not exactly 0");

    Vector z2(4);
    z2 << 0.1, 0.2, 0.3, 0.4;
    Matrix e2(4, 4);
    for (int r = 0; r < 4; ++r) e2.row(r) << 1.0, 1.0, -0.5, 2.0;
    double uniform_loss = anchor_loss(z2, e2, {1}, 0.07);
    c.expect(std::abs(uniform_loss - std::log(4.0)) < 1e-12,
             "uniform loss " + fmt(uniform_loss) + " != ln 4");

    Vector z3(2);
    z3 << 1.0, 0.0;
    Matrix e3(2, 2);
    e3 << 1.0, 0.0, 0.0, 1.0;
    double hand = anchor_loss(z3, e3, {0}, 1.0);
    c.expect(std::abs(hand - 0.31326168751822287) < 1e-9,
             "two-candidate loss " + fmt(hand) + " != softplus(-1)");
    c.note("ln4 err " + fmt(std::abs(uniform_loss - std::log(4.0))));
    return c;
}

// ---- criteria 4/5/9 share the seed-0 synthetic run ------------------------

struct SyntheticRun {
    CriterionSet criteria;
    SynthSpec synth;
    EncoderSpec spec;
    TrainConfig config;
    std::vector<Example> train_set, test_set;
    AlignModel model;
    TrainTrace trace;
    double train_seconds = 0.0;
};

SyntheticRun run_synthetic_experiment() {
    SyntheticRun run;
    run.criteria = testutil::fixture_criteria();
    run.synth.n_examples = 300;  // 200 train / 100 test
    run.synth.seed = 0;
    run.synth.min_labels = 1;    // every example carries at least one label
    auto all = generate(run.synth, run.criteria);
    run.train_set.assign(all.begin(), all.begin() + 200);
    run.test_set.assign(all.begin() + 200, all.end());

    run.config.seed = 0;
    run.model = AlignModel::init(run.spec, run.criteria, run.config.task_mode, run.config.tau,
                                 run.config.use_bias, run.config.seed);
    auto t0 = std::chrono::steady_clock::now();
    run.trace = train(run.model, run.train_set, run.criteria, run.config);
    run.train_seconds = seconds_since(t0);
    return run;
}

Check criterion4(const SyntheticRun& run) {
    Check c;
    c.expect(run.train_seconds < 300.0,
             "training took " + fmt(run.train_seconds) + "s >= 300s");
    auto res = evaluate(run.model, run.test_set);
    double macro_auc = res.macro_auc.value_or(0.0);
    c.expect(macro_auc >= 0.95, "macro AUC " + fmt(macro_auc) + " < 0.95");
    c.expect(res.macro_f1 >= 0.85, "macro F1 " + fmt(res.macro_f1) + " < 0.85");
    double initial = run.trace.initial_total();
    double final_loss = run.trace.final_total();
    c.expect(final_loss < 0.5 * initial,
             "final loss " + fmt(final_loss) + " >= 0.5 x initial " + fmt(initial));
    c.note("AUC " + fmt(macro_auc) + ", F1 " + fmt(res.macro_f1) + ", loss " + fmt(initial) +
           " -> " + fmt(final_loss) + ", " + fmt(run.train_seconds) + "s");
    return c;
}

Check criterion5(const SyntheticRun& run) {
    Check c;
    ReportIndex index = build_index(run.model, run.train_set);
    int good_queries = 0;
    int oracle_mismatches = 0;
    std::vector<oracle::Mat> tokens;
    for (const auto& e : index.entries) tokens.push_back(oracle::from_eigen(e.tokens));
    for (const auto& ex : run.test_set) {
        Matrix query = infer(run.model, ex.image, ex.id).attended.z_hat;
        auto hits = query_topk(index, query, 7);
        auto ref = oracle::topk(tokens, oracle::from_eigen(query), 7);
        for (size_t i = 0; i < hits.size(); ++i)
            if (hits[i].entry_id != ref[i].entry_id || hits[i].score != ref[i].score)
                ++oracle_mismatches;
        int sharing = 0;
        for (const auto& h : hits) {
            bool shares = false;
            for (int l : ex.labels)
                if (h.labels.count(l)) shares = true;
            if (shares) ++sharing;
        }
        if (sharing >= 4) ++good_queries;
    }
    double frac = static_cast<double>(good_queries) / run.test_set.size();
    c.expect(frac >= 0.80, "label agreement on " + fmt(frac) + " of queries < 0.80");
    c.expect(oracle_mismatches == 0,
             std::to_string(oracle_mismatches) + " top-7 oracle mismatches");
    c.note(fmt(frac * 100) + "% of queries with >=4/7 label-sharing hits");
    return c;
}

Check criterion9(const SyntheticRun& run) {
    Check c;
    const auto* heart = run.criteria.find_criterion_by_name("Heart Size");
    c.expect(heart != nullptr, "fixture lacks 'Heart Size'");
    if (!heart) return c;

    SynthSpec clean = run.synth;
    clean.noise_std = 0.0;
    Rng rng(99);
    auto ex = planted_example(clean, run.criteria, {1}, "cm-clean", rng);  // CM only
    auto att = infer(run.model, ex.image, ex.id).attended;

    // Softmax contract on every exported row.
    double worst_row = 0.0;
    for (int i = 0; i < run.model.K(); ++i)
        worst_row = std::max(worst_row, std::abs(att.attn.row(i).sum() - 1.0));
    c.expect(worst_row < 1e-6, "attention row sum off by " + fmt(worst_row));

    // Patch indices covered by the CM signature region.
    Region reg = signature_region(clean, 1, run.criteria.num_labels());
    const int p = run.spec.patch;
    const int gw = run.spec.grid_w();
    std::vector<int> patch_ids;
    for (int r = reg.r0 / p; r < (reg.r0 + reg.size) / p; ++r)
        for (int col = reg.c0 / p; col < (reg.c0 + reg.size) / p; ++col)
            patch_ids.push_back(r * gw + col);

    double mass = 0.0;
    for (int m : patch_ids) mass += att.attn(heart->id, m);
    double baseline = static_cast<double>(patch_ids.size()) / run.spec.M();
    c.expect(mass >= 2.0 * baseline,
             "Heart Size mass " + fmt(mass) + " < 2 x baseline " + fmt(baseline));
    c.note("mass " + fmt(mass) + " vs baseline " + fmt(baseline) + " (x" +
           fmt(mass / baseline) + ")");
    return c;
}

// ---- criterion 6: RAG/prompt determinism through the CLI -------------------

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(RADALIGN_CLI_PATH) + " " + args + " 2>&1";
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

Check criterion6(SyntheticRun& run) {
    Check c;
    testutil::TempDir tmp("acceptance_cli");
    auto criteria_path = testutil::data_dir() / "criteria_chestxray14.json";
    auto template_path = testutil::template_dir() / "report_v1.txt";

    save_checkpoint(run.model, tmp / "model.raln");
    ReportIndex index = build_index(run.model, run.train_set);
    index.model_fingerprint = run.model.fingerprint;
    save_index(index, tmp / "reports.ridx");
    save_image(run.test_set.front().image, tmp / "query.rimg");

    auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
    std::string args = "report --checkpoint " + q(tmp / "model.raln") + " --criteria " +
                       q(criteria_path) + " --index " + q(tmp / "reports.ridx") + " --image " +
                       q(tmp / "query.rimg") + " --template " + q(template_path) +
                       " --llm mock --k 7";
    auto r1 = run_cli(args + " --out " + q(tmp / "d1.json"));
    auto r2 = run_cli(args + " --out " + q(tmp / "d2.json"));
    c.expect(r1.exit_code == 0, "first cmd_report exited " + std::to_string(r1.exit_code) +
                                    ": " + r1.output);
    c.expect(r2.exit_code == 0, "second cmd_report exited " + std::to_string(r2.exit_code));
    if (r1.exit_code == 0 && r2.exit_code == 0) {
        auto b1 = io::read_text_file(tmp / "d1.json");
        auto b2 = io::read_text_file(tmp / "d2.json");
        c.expect(b1 == b2, "cmd_report artifacts differ between runs");
        auto j = nlohmann::json::parse(b1);
        double agreement = j["finding_agreement"].get<double>();
        c.expect(agreement == 1.0, "finding_agreement " + fmt(agreement) + " != 1.0");
        c.note("artifact " + std::to_string(b1.size()) + " bytes, agreement " + fmt(agreement));
    }
    return c;
}

// ---- criterion 7: persistence ----------------------------------------------

Check criterion7(SyntheticRun& run) {
    Check c;
    testutil::TempDir tmp("acceptance_persist");

    // Criteria JSON.
    save_criteria(run.criteria, tmp / "criteria.json");
    c.expect(load_criteria(tmp / "criteria.json") == run.criteria,
             "criteria round-trip not value-equal");

    // Dataset (subset for speed; images compared bit-exact).
    std::vector<Example> subset(run.train_set.begin(), run.train_set.begin() + 25);
    save_dataset(subset, tmp / "ds");
    auto ds2 = load_dataset(tmp / "ds");
    bool ds_equal = ds2.size() == subset.size();
    for (size_t i = 0; ds_equal && i < subset.size(); ++i)
        ds_equal = ds2[i].image == subset[i].image && ds2[i].labels == subset[i].labels &&
                   ds2[i].report == subset[i].report && ds2[i].id == subset[i].id;
    c.expect(ds_equal, "dataset round-trip not bit-exact");

    // Checkpoint.
    save_checkpoint(run.model, tmp / "model.raln");
    auto loaded = load_checkpoint(tmp / "model.raln", run.criteria);
    bool ckpt_equal = loaded.vision.W_p == run.model.vision.W_p &&
                      loaded.vision.b_p == run.model.vision.b_p &&
                      loaded.tokens.z == run.model.tokens.z &&
                      loaded.tokens.W_q == run.model.tokens.W_q &&
                      loaded.tokens.W_k == run.model.tokens.W_k &&
                      loaded.tokens.W_v == run.model.tokens.W_v &&
                      loaded.head.W == run.model.head.W && loaded.head.b == run.model.head.b;
    for (size_t i = 0; i < run.model.anchors.size(); ++i)
        ckpt_equal = ckpt_equal && loaded.anchors[i].matrix == run.model.anchors[i].matrix;
    c.expect(ckpt_equal, "checkpoint round-trip not bit-exact");

    // Index, including identical query results pre/post reload.
    ReportIndex index = build_index(run.model, run.train_set);
    index.model_fingerprint = run.model.fingerprint;
    save_index(index, tmp / "reports.ridx");
    auto reloaded = load_index(tmp / "reports.ridx", run.model.fingerprint);
    c.expect(!reloaded.fingerprint_warning.has_value(), "unexpected fingerprint warning");
    bool idx_equal = reloaded.index.entries.size() == index.entries.size();
    for (size_t i = 0; idx_equal && i < index.entries.size(); ++i)
        idx_equal = reloaded.index.entries[i].tokens == index.entries[i].tokens &&
                    reloaded.index.entries[i].report == index.entries[i].report &&
                    reloaded.index.entries[i].labels == index.entries[i].labels;
    c.expect(idx_equal, "index round-trip not bit-exact");

    bool queries_equal = true;
    for (int t = 0; t < 10; ++t) {
        const auto& ex = run.test_set[static_cast<size_t>(t * 7 % run.test_set.size())];
        Matrix query = infer(run.model, ex.image).attended.z_hat;
        auto a = query_topk(index, query, 7);
        auto b = query_topk(reloaded.index, query, 7);
        if (a.size() != b.size()) queries_equal = false;
        for (size_t i = 0; queries_equal && i < a.size(); ++i)
            queries_equal = a[i].entry_id == b[i].entry_id && a[i].score == b[i].score;
    }
    c.expect(queries_equal, "query results differ pre/post reload");
    return c;
}

// ---- criterion 8: metric correctness ---------------------------------------

Check criterion8() {
    Check c;
    c.expect(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75,
             "hand case did not give exactly 0.75");
    Rng rng(8001);
    double max_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + static_cast<int>(rng() % 60);
        std::vector<double> scores;
        std::vector<int> labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            scores.push_back(std::round(uniform01(rng) * 10.0) / 10.0);  // frequent ties
            labels.push_back(uniform01(rng) < 0.5 ? 1 : 0);
            has_pos |= labels.back() == 1;
            has_neg |= labels.back() == 0;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[static_cast<size_t>(n) - 1] = 0;
        max_err = std::max(max_err,
                           std::abs(auc(scores, labels) - oracle::auc_pairs(scores, labels)));
    }
    c.expect(max_err < 1e-12, "rank AUC vs pair counting max err " + fmt(max_err));
    c.note("200 instances, max err " + fmt(max_err));
    return c;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const std::string& name, Check c) {
        bool pass = c.failures == 0;
        if (!pass) ++failures;
        std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name;
        auto detail = c.detail.str();
        if (!detail.empty()) std::cout << " — " << detail;
        std::cout << "\n" << std::flush;
    };

    report(1, "oracle equivalence (cross_attend, similarities, classify, total_loss, query_topk)",
           criterion1());
    report(2, "gradient suite vs central finite differences", criterion2());
    report(3, "anchor-loss analytics", criterion3());

    SyntheticRun run = run_synthetic_experiment();
    report(4, "synthetic end-to-end classification (seed 0, 40 epochs)", criterion4(run));
    report(5, "retrieval quality and top-7 oracle equality", criterion5(run));
    report(6, "cmd_report determinism and echo-mock finding agreement", criterion6(run));
    report(7, "persistence round-trips (criteria, dataset, checkpoint, index)", criterion7(run));
    report(8, "metric correctness (rank AUC vs pair counting)", criterion8());
    report(9, "interpretability: attention mass on the planted CM signature", criterion9(run));

    if (failures > 0)
        std::cout << failures << " criterion(s) failed\n";
    else
        std::cout << "all 9 acceptance criteria passed\n";
    return failures;
}
