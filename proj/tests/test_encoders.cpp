#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace radalign;

namespace {

EncoderSpec small_spec() {
    EncoderSpec spec;
    spec.d = 16;
    spec.d_v = 8;
    spec.patch = 4;
    spec.image_h = 16;
    spec.image_w = 16;
    spec.seed = 3;
    return spec;
}

}  // namespace

TEST_CASE("encode_text is deterministic and batch-invariant") {
    EncoderSpec spec = small_spec();
    auto two = encode_text({"pleural fluid", "pleural fluid"}, spec);
    CHECK(two.matrix.row(0) == two.matrix.row(1));

    auto alone = encode_text({"pleural fluid"}, spec);
    auto batched = encode_text({"other text", "pleural fluid", "more text"}, spec);
    CHECK(alone.matrix.row(0) == batched.matrix.row(1));
}

TEST_CASE("encode_text rows are L2-normalized") {
    auto emb = encode_text({"enlarged cardiac silhouette", "lungs are clear", "a"}, small_spec());
    for (Eigen::Index r = 0; r < emb.matrix.rows(); ++r)
        CHECK(std::abs(emb.matrix.row(r).norm() - 1.0) < 1e-6);
}

TEST_CASE("encode_text rejects empty input") {
    CHECK_THROWS_AS(encode_text({}, small_spec()), PreconditionError);
    CHECK_THROWS_AS(encode_text({"ok", "   "}, small_spec()), PreconditionError);
}

TEST_CASE("encode_text seed changes the embedding") {
    EncoderSpec a = small_spec();
    EncoderSpec b = small_spec();
    b.seed = a.seed + 1;
    auto ea = encode_text({"pleural fluid"}, a);
    auto eb = encode_text({"pleural fluid"}, b);
    CHECK(ea.matrix != eb.matrix);
}

TEST_CASE("fixture texts at seed 7 match the committed golden file") {
    EncoderSpec spec;  // default d = 64
    spec.seed = 7;
    auto cs = testutil::fixture_criteria();
    std::vector<std::string> texts;
    for (const auto& c : cs.criteria)
        for (const auto& d : c.descriptions) texts.push_back(d.text);
    auto emb = encode_text(texts, spec);

    Matrix golden = load_embedding(testutil::test_data_dir() / "golden_text_seed7.raem");
    REQUIRE(golden.rows() == emb.matrix.rows());
    REQUIRE(golden.cols() == emb.matrix.cols());
    CHECK(golden == emb.matrix);  // bit-exact
}

TEST_CASE("zero image through a bias-free encoder yields a zero grid") {
    EncoderSpec spec = small_spec();
    VisionEncoder enc(spec);
    Rng rng(1);
    enc.init(rng);   // bias stays zero
    auto feats = enc.forward(Matrix::Zero(spec.image_h, spec.image_w));
    CHECK(feats.grid.isZero(0.0));
}

TEST_CASE("encode_image is deterministic and shapes follow the patch grid") {
    EncoderSpec spec;
    spec.d_v = 12;
    spec.patch = 4;
    spec.image_h = 32;
    spec.image_w = 32;
    VisionEncoder enc(spec);
    Rng rng(5);
    enc.init(rng);
    Matrix image = testutil::random_matrix(32, 32, rng);
    auto a = enc.forward(image);
    auto b = enc.forward(image);
    CHECK(a.grid == b.grid);
    CHECK(a.grid.rows() == 64);  // (32/4)^2
    CHECK(a.grid.cols() == 12);
}

TEST_CASE("encode_image rejects mismatched shapes") {
    VisionEncoder enc(small_spec());
    CHECK_THROWS_AS(enc.forward(Matrix::Zero(8, 16)), PreconditionError);
    CHECK_THROWS_AS(enc.forward(Matrix::Zero(3, 3)), PreconditionError);
}

TEST_CASE("vision encoder VJP matches central finite differences on a parameter slice") {
    EncoderSpec spec = small_spec();
    VisionEncoder enc(spec);
    Rng rng(11);
    enc.init(rng);
    enc.b_p = testutil::random_vector(spec.d_v, rng, 0.1);
    Matrix image = testutil::random_matrix(spec.image_h, spec.image_w, rng);
    Matrix R = testutil::random_matrix(spec.M(), spec.d_v, rng);  // fixed cotangent

    auto grid = enc.forward(image).grid;
    auto grads = enc.backward(image, grid, R);

    const double h = 1e-5;
    auto objective = [&](const VisionEncoder& e) {
        return (e.forward(image).grid.array() * R.array()).sum();
    };
    struct Probe {
        double* param;
        double analytic;
    };
    std::vector<Probe> probes = {{&enc.W_p(0, 0), grads.dW_p(0, 0)},
                                 {&enc.W_p(1, 3), grads.dW_p(1, 3)},
                                 {&enc.b_p(2), grads.db_p(2)}};
    for (auto& p : probes) {
        double orig = *p.param;
        *p.param = orig + h;
        double up = objective(enc);
        *p.param = orig - h;
        double down = objective(enc);
        *p.param = orig;
        double numeric = (up - down) / (2 * h);
        double rel = std::abs(p.analytic - numeric) /
                     std::max({std::abs(p.analytic), std::abs(numeric), 1e-8});
        CHECK(rel < 1e-3);
    }
}

TEST_CASE("embedding files round-trip bit-exact") {
    testutil::TempDir tmp("encoders");
    Rng rng(9);
    Matrix m = testutil::random_matrix(5, 7, rng);
    save_embedding(m, tmp / "m.raem");
    CHECK(load_embedding(tmp / "m.raem") == m);
}

TEST_CASE("embedding loader rejects foreign files") {
    testutil::TempDir tmp("encoders");
    io::atomic_write(tmp / "bad.raem", [](std::ostream& os) { os << "not an embedding"; });
    CHECK_THROWS_AS(load_embedding(tmp / "bad.raem"), FormatError);
}
