#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tgseg/fusion.hpp"

using namespace tgseg;

namespace {

FusionBlock make_block(nn::ParamStore& ps, FusionConfig cfg, Rng& rng) {
    return FusionBlock(ps, "fusion", cfg, rng);
}

// independent evaluation of the fused field by plain loops
Tensor brute_force_fuse(const Tensor& z_i, const Tensor& rows, const Tensor& wq,
                        const Tensor& wk, const Tensor& wv, int d_k) {
    const int c = z_i.shape[0];
    const int S = static_cast<int>(z_i.numel()) / c;
    const int L = rows.shape[0];
    const int dt = rows.shape[1];
    Tensor out = z_i;
    for (int s = 0; s < S; ++s) {
        std::vector<double> logits(static_cast<size_t>(L), 0.0);
        for (int l = 0; l < L; ++l) {
            double dot = 0.0;
            for (int j = 0; j < d_k; ++j) {
                double qj = 0.0, kj = 0.0;
                for (int i = 0; i < c; ++i) qj += z_i.data[static_cast<size_t>(i) * S + s] * wq.at(i, j);
                for (int i = 0; i < dt; ++i) kj += rows.at(l, i) * wk.at(i, j);
                dot += qj * kj;
            }
            logits[static_cast<size_t>(l)] = dot / std::sqrt(static_cast<double>(d_k));
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double z = 0.0;
        std::vector<double> w(static_cast<size_t>(L));
        for (int l = 0; l < L; ++l) {
            w[static_cast<size_t>(l)] = std::exp(logits[static_cast<size_t>(l)] - mx);
            z += w[static_cast<size_t>(l)];
        }
        for (int i = 0; i < c; ++i) {
            double acc = 0.0;
            for (int l = 0; l < L; ++l) {
                double vli = 0.0;
                for (int j = 0; j < dt; ++j) vli += rows.at(l, j) * wv.at(j, i);
                acc += w[static_cast<size_t>(l)] / z * vli;
            }
            out.data[static_cast<size_t>(i) * S + s] += acc;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fuse with W_v = 0 returns z_i bit-exactly") {
    Rng rng(41);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 3;
    cfg.d_t = 4;
    cfg.d_k = 2;
    FusionBlock f = make_block(ps, cfg, rng);
    std::fill(f.w_v().node()->value.data.begin(), f.w_v().node()->value.data.end(), 0.0);
    Tensor z = Tensor::randn(rng, {3, 2, 2, 2});
    Tensor rows = Tensor::randn(rng, {2, 4});
    ad::NoGradGuard ng;
    Tensor fused = f.forward(ad::constant(z), ad::constant(rows)).val();
    CHECK(fused.data == z.data);  // residual identity, exact
}

TEST_CASE("length-1 key sequence: softmax weight is one, text term broadcasts") {
    Rng rng(42);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 3;
    cfg.d_t = 4;
    cfg.d_k = 2;
    FusionBlock f = make_block(ps, cfg, rng);
    f.capture = std::make_shared<std::vector<Tensor>>();
    Tensor z = Tensor::randn(rng, {3, 2, 2, 2});
    Tensor row = Tensor::randn(rng, {1, 4});
    ad::NoGradGuard ng;
    Tensor fused = f.forward(ad::constant(z), ad::constant(row)).val();
    REQUIRE(f.capture->size() == 1);
    const Tensor& attn = f.capture->front();
    for (std::int64_t i = 0; i < attn.numel(); ++i) CHECK(attn[i] == 1.0);
    // fused = z + broadcast(z_t W_v)
    Tensor bias({3});
    for (int i = 0; i < 3; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += row.at(0, j) * f.w_v().val().at(j, i);
        bias[i] = acc;
    }
    for (int ch = 0; ch < 3; ++ch)
        for (int s = 0; s < 8; ++s)
            CHECK(fused.data[static_cast<size_t>(ch) * 8 + s] ==
                  doctest::Approx(z.data[static_cast<size_t>(ch) * 8 + s] + bias[ch])
                      .epsilon(1e-12));
}

TEST_CASE("two-key hand example matches the brute-force oracle and frozen values") {
    Rng rng(43);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 2;
    cfg.d_t = 2;
    cfg.d_k = 1;
    FusionBlock f = make_block(ps, cfg, rng);
    f.capture = std::make_shared<std::vector<Tensor>>();
    // z_i over a 1x1x2 grid, channel-major [c][s]
    Tensor z({2, 1, 1, 2}, std::vector<double>{1.0, -0.5, 0.25, 0.75});
    Tensor rows({2, 2}, std::vector<double>{0.5, -1.0, 1.5, 0.25});
    f.w_q().node()->value = Tensor({2, 1}, std::vector<double>{0.3, -0.2});
    f.w_k().node()->value = Tensor({2, 1}, std::vector<double>{0.4, 0.1});
    f.w_v().node()->value = Tensor({2, 2}, std::vector<double>{0.2, -0.3, 0.5, 0.1});
    ad::NoGradGuard ng;
    Tensor fused = f.forward(ad::constant(z), ad::constant(rows)).val();
    Tensor oracle = brute_force_fuse(z.reshaped({2, 2}), rows, f.w_q().val(), f.w_k().val(),
                                     f.w_v().val(), 1);
    for (std::int64_t i = 0; i < fused.numel(); ++i)
        CHECK(fused[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
    // frozen values from the independent evaluation
    CHECK(fused[0] == doctest::Approx(1.039531518624627).epsilon(1e-6));
    CHECK(fused[1] == doctest::Approx(-0.5199173898661467).epsilon(1e-6));
    CHECK(fused[2] == doctest::Approx(-0.09323395849613297).epsilon(1e-6));
    CHECK(fused[3] == doctest::Approx(0.419376416032213).epsilon(1e-6));
    const Tensor& attn = f.capture->front();
    CHECK(attn.at(0, 0) == doctest::Approx(0.46723452287924006).epsilon(1e-6));
    CHECK(attn.at(1, 0) == doctest::Approx(0.5392938058983595).epsilon(1e-6));
    for (int s = 0; s < 2; ++s)
        CHECK(attn.at(s, 0) + attn.at(s, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("attention rows sum to one across random inputs") {
    Rng rng(44);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 4;
    cfg.d_t = 6;
    cfg.d_k = 3;
    FusionBlock f = make_block(ps, cfg, rng);
    f.capture = std::make_shared<std::vector<Tensor>>();
    ad::NoGradGuard ng;
    for (int trial = 0; trial < 5; ++trial) {
        f.capture->clear();
        Tensor z = Tensor::randn(rng, {4, 2, 2, 2}, 2.0);
        Tensor rows = Tensor::randn(rng, {3, 6}, 2.0);
        f.forward(ad::constant(z), ad::constant(rows));
        for (const auto& attn : *f.capture)
            for (int i = 0; i < attn.shape[0]; ++i) {
                double s = 0.0;
                for (int j = 0; j < attn.shape[1]; ++j) s += attn.at(i, j);
                CHECK(std::abs(s - 1.0) < 1e-6);
            }
    }
}

TEST_CASE("spatial flip equivariance with a length-1 text sequence") {
    Rng rng(45);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 3;
    cfg.d_t = 4;
    cfg.d_k = 2;
    FusionBlock f = make_block(ps, cfg, rng);
    Tensor z = Tensor::randn(rng, {3, 2, 4, 2});
    Tensor row = Tensor::randn(rng, {1, 4});
    auto flip1 = [](const Tensor& t) {
        Tensor o(t.shape);
        for (int c = 0; c < t.shape[0]; ++c)
            for (int z0 = 0; z0 < t.shape[1]; ++z0)
                for (int y = 0; y < t.shape[2]; ++y)
                    for (int x = 0; x < t.shape[3]; ++x)
                        o.at(c, z0, y, x) = t.at(c, z0, t.shape[2] - 1 - y, x);
        return o;
    };
    ad::NoGradGuard ng;
    Tensor a = f.forward(ad::constant(flip1(z)), ad::constant(row)).val();
    Tensor b = flip1(f.forward(ad::constant(z), ad::constant(row)).val());
    for (std::int64_t i = 0; i < a.numel(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
}

TEST_CASE("fusion gradients match finite differences (c=4, d_t=4, d_k=4, 2^3 grid)") {
    Rng rng(46);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 4;
    cfg.d_t = 4;
    cfg.d_k = 4;
    FusionBlock f = make_block(ps, cfg, rng);
    Tensor z = Tensor::randn(rng, {4, 2, 2, 2});
    Tensor rows = Tensor::randn(rng, {3, 4});
    Tensor target = Tensor::randn(rng, {4, 2, 2, 2});
    auto loss = [&] {
        ad::Var fused = f.forward(ad::constant(z), ad::constant(rows));
        ad::Var d = ad::sub(fused, ad::constant(target));
        return ad::mean_all(ad::mul(d, d));
    };
    CHECK(tgseg::testing::gradcheck({f.w_q(), f.w_k(), f.w_v()}, loss) < 1e-3);
}

TEST_CASE("concat ablation keeps shapes and mixes text in") {
    Rng rng(47);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 3;
    cfg.d_t = 4;
    cfg.concat_ablation = true;
    FusionBlock f = make_block(ps, cfg, rng);
    Tensor z = Tensor::randn(rng, {3, 2, 2, 2});
    Tensor row = Tensor::randn(rng, {1, 4});
    ad::NoGradGuard ng;
    Tensor out = f.forward(ad::constant(z), ad::constant(row)).val();
    CHECK(out.shape == z.shape);  // output shapes unchanged under the ablation
    Tensor row2 = Tensor::randn(rng, {1, 4});
    Tensor out2 = f.forward(ad::constant(z), ad::constant(row2)).val();
    CHECK(out.data != out2.data);  // text still reaches the output
    CHECK_THROWS_AS(f.forward(ad::constant(z), ad::constant(Tensor::randn(rng, {2, 4}))),
                    ShapeError);
}

TEST_CASE("dimension mismatches are shape errors") {
    Rng rng(48);
    nn::ParamStore ps;
    FusionConfig cfg;
    cfg.c = 3;
    cfg.d_t = 4;
    cfg.d_k = 2;
    FusionBlock f = make_block(ps, cfg, rng);
    ad::NoGradGuard ng;
    CHECK_THROWS_AS(f.forward(ad::constant(Tensor::randn(rng, {2, 2, 2, 2})),
                              ad::constant(Tensor::randn(rng, {1, 4}))),
                    ShapeError);
    CHECK_THROWS_AS(f.forward(ad::constant(Tensor::randn(rng, {3, 2, 2, 2})),
                              ad::constant(Tensor::randn(rng, {1, 5}))),
                    ShapeError);
}
