#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "clipit/grad_check.hpp"
#include "clipit/model.hpp"
#include "clipit/rng.hpp"

using namespace clipit;

namespace {

Matrix random_column(std::size_t d, Rng& rng) {
    Matrix x(d, 1);
    for (std::size_t i = 0; i < d; ++i) x[i] = rng.next_gaussian();
    return x;
}

}  // namespace

TEST_CASE("lora_forward: identity at init, hand example, alpha linearity") {
    Rng rng(1);
    LoraLinear l;
    l.w = Matrix::gaussian(3, 3, 1.0, rng);
    l.a = Matrix::gaussian(2, 3, 0.5, rng);
    l.b = Matrix(3, 2);  // zero: adapted == base exactly
    l.alpha = 4.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = random_column(3, rng);
        const Matrix y = lora_forward(l, x);
        const Matrix base = matmul(l.w, x);
        CHECK(y.bit_equal(base));
    }

    LoraLinear hand;
    hand.w = Matrix::identity(2);
    hand.a = Matrix(1, 2);
    hand.a(0, 0) = 1.0;
    hand.b = Matrix(2, 1);
    hand.b(1, 0) = 1.0;
    hand.alpha = 1.0;
    Matrix x(2, 1);
    x[0] = 1.0;
    const Matrix y = lora_forward(hand, x);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 1.0);

    LoraLinear doubled = hand;
    doubled.alpha = 2.0;
    const Matrix y2 = lora_forward(doubled, x);
    CHECK(y2[0] - x[0] == Catch::Approx(2.0 * (y[0] - x[0])).margin(1e-15));
    CHECK(y2[1] == Catch::Approx(2.0 * y[1]).margin(1e-15));

    Matrix wrong(3, 1);
    CHECK_THROWS_AS(lora_forward(hand, wrong), DimensionMismatchError);
}

TEST_CASE("fresh model: fused logits are the mean of the branch logits") {
    ModelConfig cfg;
    cfg.d_v = 6;
    cfg.d_t = 5;
    cfg.classes = 3;
    const ClipItModel m = init_model(cfg, 99);
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix x_v = random_column(6, rng);
        const Matrix x_t = random_column(5, rng);
        const auto joint = forward_joint(m, x_v, x_t);
        // B = 0 so v == x_v and t == x_t
        const Matrix lt = m.h_t->forward(m.h_d->forward(x_v));
        const Matrix lv = m.h_v->forward(x_v);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(joint.logits[c] == Catch::Approx(0.5 * (lt[c] + lv[c])).margin(1e-12));
        CHECK(joint.t.bit_equal(x_t));
    }
}

TEST_CASE("fused logits never depend on the text input") {
    ModelConfig cfg;
    cfg.d_v = 8;
    cfg.d_t = 8;
    cfg.classes = 2;
    ClipItModel m = init_model(cfg, 3);
    Rng rng(17);
    // perturb away from init so the property holds for arbitrary weights
    for (std::size_t i = 0; i < m.f_v->b.size(); ++i) m.f_v->b[i] = rng.next_gaussian();
    for (std::size_t i = 0; i < m.g->w.size(); ++i) m.g->w[i] += 0.1 * rng.next_gaussian();
    const Matrix x_v = random_column(8, rng);
    const auto a = forward_joint(m, x_v, random_column(8, rng));
    const auto b = forward_joint(m, x_v, random_column(8, rng));
    CHECK(a.logits.bit_equal(b.logits));
    CHECK_FALSE(a.t.bit_equal(b.t));
}

TEST_CASE("predict_unimodal logits are bit-identical to forward_joint logits") {
    Rng rng(23);
    for (int rep = 0; rep < 25; ++rep) {
        ModelConfig cfg;
        cfg.d_v = 4 + rng.next_index(8);
        cfg.d_t = 4 + rng.next_index(8);
        cfg.classes = 2 + rng.next_index(3);
        ClipItModel m = init_model(cfg, 1000 + rep);
        // random non-init state
        for (std::size_t i = 0; i < m.f_v->b.size(); ++i) m.f_v->b[i] = rng.next_gaussian();
        for (std::size_t i = 0; i < m.h_d->w2.size(); ++i)
            m.h_d->w2[i] += rng.next_gaussian();
        const Matrix x_v = random_column(cfg.d_v, rng);
        const Matrix x_t = random_column(cfg.d_t, rng);
        const auto joint = forward_joint(m, x_v, x_t);
        const auto uni = predict_unimodal(m, x_v);
        CHECK(uni.logits.bit_equal(joint.logits));
    }
}

TEST_CASE("degenerate fusion selecting the vision slot reduces to the vision head") {
    ModelConfig cfg;
    cfg.d_v = 5;
    cfg.d_t = 5;
    cfg.classes = 2;
    ClipItModel m = init_model(cfg, 7);
    m.g->w = Matrix(2, 4);
    m.g->w(0, 2) = 1.0;  // identity on the h_v slots, zero on the h_t slots
    m.g->w(1, 3) = 1.0;
    Rng rng(2);
    const Matrix x_v = random_column(5, rng);
    const auto p = predict_unimodal(m, x_v);
    const Matrix lv = m.h_v->forward(adapt_vision(m, x_v));
    CHECK(p.label == argmax_index(lv));
    for (std::size_t c = 0; c < 2; ++c) CHECK(p.logits[c] == lv[c]);
}

TEST_CASE("toy forward pass matches a straight-line hand calculation") {
    // d_v = d_t = 2, hidden = 2, C = 2; every weight small and explicit
    ModelConfig cfg;
    cfg.d_v = 2;
    cfg.d_t = 2;
    cfg.classes = 2;
    cfg.lora_rank = 1;
    cfg.lora_alpha = 2.0;
    ClipItModel m = init_model(cfg, 1);
    m.f_v->a = Matrix(1, 2);
    m.f_v->a(0, 0) = 0.5;
    m.f_v->a(0, 1) = -0.25;
    m.f_v->b = Matrix(2, 1);
    m.f_v->b(0, 0) = 1.0;
    m.f_v->b(1, 0) = 2.0;
    m.h_d->w1 = Matrix(2, 2);
    m.h_d->w1(0, 0) = 0.3;
    m.h_d->w1(0, 1) = -0.2;
    m.h_d->w1(1, 0) = 0.1;
    m.h_d->w1(1, 1) = 0.4;
    m.h_d->b1.fill(0.05);
    m.h_d->w2 = Matrix(2, 2);
    m.h_d->w2(0, 0) = 1.0;
    m.h_d->w2(0, 1) = -1.0;
    m.h_d->w2(1, 0) = 0.5;
    m.h_d->w2(1, 1) = 0.5;
    m.h_d->b2.fill(-0.1);
    m.h_t->w = Matrix(2, 2);
    m.h_t->w(0, 0) = 0.7;
    m.h_t->w(1, 1) = -0.6;
    m.h_t->b.fill(0.02);
    m.h_v->w = Matrix(2, 2);
    m.h_v->w(0, 1) = 0.9;
    m.h_v->w(1, 0) = -0.8;
    m.h_v->b.fill(-0.03);
    // g stays at the averaging init [I/2 | I/2]

    Matrix x(2, 1);
    x[0] = 0.4;
    x[1] = -1.2;

    // straight-line recomputation with plain scalar arithmetic
    const double ax = 0.5 * 0.4 + (-0.25) * (-1.2);         // A x
    const double scale = 2.0 / 1.0;                          // alpha / r
    const double v0 = 0.4 + scale * 1.0 * ax;
    const double v1 = -1.2 + scale * 2.0 * ax;
    const double h0 = std::tanh(0.3 * v0 - 0.2 * v1 + 0.05);
    const double h1 = std::tanh(0.1 * v0 + 0.4 * v1 + 0.05);
    const double th0 = 1.0 * h0 - 1.0 * h1 - 0.1;
    const double th1 = 0.5 * h0 + 0.5 * h1 - 0.1;
    const double lt0 = 0.7 * th0 + 0.02;
    const double lt1 = -0.6 * th1 + 0.02;
    const double lv0 = 0.9 * v1 - 0.03;
    const double lv1 = -0.8 * v0 - 0.03;
    const double y0 = 0.5 * lt0 + 0.5 * lv0;
    const double y1 = 0.5 * lt1 + 0.5 * lv1;

    const auto p = predict_unimodal(m, x);
    CHECK(p.logits[0] == Catch::Approx(y0).margin(1e-12));
    CHECK(p.logits[1] == Catch::Approx(y1).margin(1e-12));
    CHECK(p.label == (y0 >= y1 ? 0u : 1u));
}

TEST_CASE("argmax breaks ties toward the lowest class index") {
    Matrix logits(3, 1);
    logits[0] = 1.0;
    logits[1] = 1.0;
    logits[2] = 0.5;
    CHECK(argmax_index(logits) == 0);
}

TEST_CASE("count_cost: frozen sums for the default configuration") {
    ModelConfig cfg;  // d_v = d_t = 64, hidden 64, C = 2, r = 8
    const ClipItModel m = init_model(cfg, 0);
    const CostReport r = count_cost(m);
    // independent summation:
    //   adapters: W 4096 frozen + A 512 + B 512 each
    //   heads: 130 each; h_d: 64*64+64 + 64*64+64 = 8320; g: 10
    CHECK(r.param_total == 2 * (4096 + 512 + 512) + 130 + 130 + 8320 + 10);
    CHECK(r.param_trainable == 2 * (512 + 512) + 130 + 130 + 8320 + 10);
    // FLOPs: matmuls 2*m*n, tanh costs hidden width, adds free
    CHECK(r.flops_unimodal == (8192 + 1024 + 1024) + (8192 + 64 + 8192) + 256 + 256 + 16);
    CHECK(r.flops_text_branch == 8192 + 1024 + 1024);
    CHECK(r.param_trainable <= r.param_total);
}

TEST_CASE("count_cost: single affine and LoRA definitional counts") {
    ClipItModel m;
    m.cfg.variant = Variant::VisionOnly;
    m.cfg.d_v = 4;
    m.cfg.d_t = 4;
    m.cfg.classes = 3;
    Affine a;
    a.w = Matrix(3, 4);
    a.b = Matrix(3, 1);
    m.h_v = a;
    const CostReport r = count_cost(m);
    CHECK(r.param_total == 15);
    CHECK(r.flops_unimodal == 24);

    Rng rng(4);
    ClipItModel lm;
    lm.cfg.d_v = 4;
    LoraLinear l;
    l.w = Matrix::identity(4);
    l.a = Matrix::gaussian(2, 4, 1.0, rng);
    l.b = Matrix(4, 2);
    lm.f_v = l;
    const CostReport lr = count_cost(lm);
    CHECK(lr.param_trainable == 2 * (4 + 4));
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
    ModelConfig cfg;
    cfg.d_v = 10;
    cfg.d_t = 6;
    cfg.classes = 4;
    cfg.lora_rank = 3;
    cfg.lora_alpha = 2.0;
    cfg.lambda = 0.75;
    ClipItModel m = init_model(cfg, 77);
    Rng rng(6);
    for (std::size_t i = 0; i < m.f_t->b.size(); ++i) m.f_t->b[i] = rng.next_gaussian();
    const auto path = std::filesystem::temp_directory_path() / "clipit_model.cipm";
    save_model(m, path.string());
    const ClipItModel t = load_model(path.string());
    CHECK(t.cfg.d_v == 10);
    CHECK(t.cfg.d_t == 6);
    CHECK(t.cfg.classes == 4);
    CHECK(t.cfg.lora_rank == 3);
    CHECK(t.cfg.lora_alpha == 2.0);
    CHECK(t.cfg.lambda == 0.75);
    CHECK(t.f_v->w.bit_equal(m.f_v->w));
    CHECK(t.f_t->b.bit_equal(m.f_t->b));
    CHECK(t.h_d->w2.bit_equal(m.h_d->w2));
    CHECK(t.g->w.bit_equal(m.g->w));

    // saving the loaded model reproduces the file byte for byte
    const auto path2 = std::filesystem::temp_directory_path() / "clipit_model2.cipm";
    save_model(t, path2.string());
    CHECK(detail::read_file(path.string()) == detail::read_file(path2.string()));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("finalized checkpoint drops the text encoder and stays loadable") {
    ModelConfig cfg;
    cfg.d_v = 8;
    cfg.d_t = 8;
    cfg.classes = 2;
    ClipItModel m = init_model(cfg, 5);
    const auto full = std::filesystem::temp_directory_path() / "clipit_full.cipm";
    save_model(m, full.string());
    finalize_unimodal(m);
    CHECK_FALSE(m.f_t.has_value());
    const auto uni = std::filesystem::temp_directory_path() / "clipit_uni.cipm";
    save_model(m, uni.string());
    CHECK(std::filesystem::file_size(uni) < std::filesystem::file_size(full));
    const ClipItModel t = load_model(uni.string());
    CHECK(t.text_dropped);
    CHECK_FALSE(t.f_t.has_value());
    CHECK(t.h_t.has_value());  // h_t stays: it consumes t_hat at inference
    Rng rng(3);
    const Matrix x = random_column(8, rng);
    CHECK(predict_unimodal(t, x).logits.bit_equal(predict_unimodal(m, x).logits));
    CHECK_THROWS_AS(forward_joint(t, x, x), ConfigInvalidError);
    std::filesystem::remove(full);
    std::filesystem::remove(uni);
}

TEST_CASE("checkpoint loader rejects garbage") {
    const auto path = std::filesystem::temp_directory_path() / "clipit_bad.cipm";
    detail::write_file(path.string(), "NOPE00000000");
    CHECK_THROWS_AS(load_model(path.string()), BadMagicError);
    std::string v1 = "CIPM";
    detail::put_u32(v1, 1);
    detail::write_file(path.string(), v1);
    CHECK_THROWS_AS(load_model(path.string()), TruncatedFileError);
    std::string v9 = "CIPM";
    detail::put_u32(v9, 9);
    detail::write_file(path.string(), v9);
    CHECK_THROWS_AS(load_model(path.string()), UnsupportedVersionError);
    std::filesystem::remove(path);
}
