#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tgseg/label_codec.hpp"
#include "tgseg/losses.hpp"
#include "tgseg/patch.hpp"

using namespace tgseg;

namespace {

// brute-force soft dice, written independently of the library path
double brute_soft_dice(const Tensor& probs, const std::vector<int>& target, int cls,
                       double eps_s) {
    const int N = probs.shape[0];
    const std::int64_t S = probs.numel() / N;
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (std::int64_t v = 0; v < S; ++v) {
        const double pv = probs.data[static_cast<size_t>(cls * S + v)];
        psum += pv;
        if (target[static_cast<size_t>(v)] == cls) {
            tsum += 1.0;
            inter += pv;
        }
    }
    return (2.0 * inter + eps_s) / (psum + tsum + eps_s);
}

Tensor random_probs(Rng& rng, int N, int D, int H, int W) {
    Tensor t({N, D, H, W});
    const std::int64_t S = static_cast<std::int64_t>(D) * H * W;
    for (std::int64_t v = 0; v < S; ++v) {
        double z = 0.0;
        std::vector<double> e(static_cast<size_t>(N));
        for (int c = 0; c < N; ++c) {
            e[static_cast<size_t>(c)] = std::exp(rng.normal());
            z += e[static_cast<size_t>(c)];
        }
        for (int c = 0; c < N; ++c) t.data[static_cast<size_t>(c * S + v)] = e[static_cast<size_t>(c)] / z;
    }
    return t;
}

}  // namespace

TEST_CASE("perfect one-hot prediction: ce zero, dice loss at the smoothing floor") {
    const int N = 2, D = 2, H = 2, W = 2;
    std::vector<int> target{0, 1, 1, 0, 1, 0, 0, 1};
    Tensor probs({N, D, H, W});
    const std::int64_t S = 8;
    for (std::int64_t v = 0; v < S; ++v)
        probs.data[static_cast<size_t>(target[static_cast<size_t>(v)] * S + v)] = 1.0;
    SegLossTerms seg = segmentation_loss(ad::constant(probs), target, 1.0);
    CHECK(seg.l_ce.val().data[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(seg.l_dsc.val().data[0] < 1e-5);  // eps_s-induced bound
    CHECK(seg.l1.val().data[0] < 1e-5);
}

TEST_CASE("uniform prediction over two classes: ce = ln 2") {
    const int N = 2;
    Tensor probs = Tensor::full({N, 2, 2, 2}, 0.5);
    std::vector<int> target(8, 1);
    SegLossTerms seg = segmentation_loss(ad::constant(probs), target, 0.7);
    CHECK(seg.l_ce.val().data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("soft dice matches the brute-force voxel-sum oracle within 1e-9") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor probs = random_probs(rng, 2, 4, 4, 4);
        std::vector<int> target(64);
        for (auto& t : target) t = static_cast<int>(rng.uniform_int(0, 1));
        SegLossTerms seg = segmentation_loss(ad::constant(probs), target, 1.0);
        const double want = 1.0 - brute_soft_dice(probs, target, 1, 1e-5);
        CHECK(seg.l_dsc.val().data[0] == doctest::Approx(want).epsilon(1e-9));
        // per-class values match too
        CHECK(seg.per_class_dice[0] ==
              doctest::Approx(brute_soft_dice(probs, target, 0, 1e-5)).epsilon(1e-9));
        CHECK(seg.per_class_dice[1] ==
              doctest::Approx(brute_soft_dice(probs, target, 1, 1e-5)).epsilon(1e-9));
    }
}

TEST_CASE("soft dice is invariant under simultaneous spatial permutation") {
    Rng rng(62);
    Tensor probs = random_probs(rng, 2, 4, 4, 4);
    std::vector<int> target(64);
    for (auto& t : target) t = static_cast<int>(rng.uniform_int(0, 1));
    SegLossTerms base = segmentation_loss(ad::constant(probs), target, 1.0);
    GeomTransform g;
    g.flip = {true, false, true};
    g.rot_axis = 1;
    g.rot_quarters = 2;
    Tensor p0 = Tensor({4, 4, 4});
    // permute each class plane and the target with the same map
    Tensor probs_p({2, 4, 4, 4});
    for (int c = 0; c < 2; ++c) {
        for (std::int64_t i = 0; i < 64; ++i) p0[i] = probs.data[static_cast<size_t>(c * 64 + i)];
        Tensor moved = apply_geom(p0, g);
        for (std::int64_t i = 0; i < 64; ++i) probs_p.data[static_cast<size_t>(c * 64 + i)] = moved[i];
    }
    Tensor tgt({4, 4, 4});
    for (std::int64_t i = 0; i < 64; ++i) tgt[i] = target[static_cast<size_t>(i)];
    Tensor tgt_moved = apply_geom(tgt, g);
    std::vector<int> target_p(64);
    for (std::int64_t i = 0; i < 64; ++i) target_p[static_cast<size_t>(i)] = static_cast<int>(tgt_moved[i]);
    SegLossTerms moved = segmentation_loss(ad::constant(probs_p), target_p, 1.0);
    CHECK(moved.l_dsc.val().data[0] ==
          doctest::Approx(base.l_dsc.val().data[0]).epsilon(1e-12));
}

TEST_CASE("simplex violations beyond 1e-4 are validation errors") {
    Tensor probs = Tensor::full({2, 2, 2, 2}, 0.5);
    probs[0] = 0.5 + 2e-4;
    std::vector<int> target(8, 0);
    CHECK_THROWS_AS(segmentation_loss(ad::constant(probs), target, 1.0), ValidationError);
    probs[0] = -0.1;
    probs[8] = 1.1;
    CHECK_THROWS_AS(segmentation_loss(ad::constant(probs), target, 1.0), ValidationError);
}

TEST_CASE("denoiser loss: exact and analytic cases, brute-force oracle") {
    Rng rng(63);
    Tensor a = Tensor::randn(rng, {2, 2, 2, 2});
    CHECK(denoiser_loss(ad::constant(a), a).val().data[0] == 0.0);
    Tensor zeros = Tensor::zeros({8});
    Tensor ones = Tensor::full({8}, 1.0);
    CHECK(denoiser_loss(ad::constant(zeros), ones).val().data[0] == doctest::Approx(1.0));
    Tensor p = Tensor::randn(rng, {2, 2, 2, 2});
    Tensor q = Tensor::randn(rng, {2, 2, 2, 2});
    double brute = 0.0;
    for (std::int64_t i = 0; i < 16; ++i) brute += (p[i] - q[i]) * (p[i] - q[i]);
    brute /= 16.0;
    CHECK(denoiser_loss(ad::constant(p), q).val().data[0] ==
          doctest::Approx(brute).epsilon(1e-12));
    CHECK_THROWS_AS(denoiser_loss(ad::constant(p), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("total loss arithmetic and report identities") {
    LossWeights w;
    w.lambda = 0.0;
    CHECK(total_loss(0.37, 99.0, w) == 0.37);
    w.lambda = 2.0;
    CHECK(total_loss(0.5, 0.25, w) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(64);
    Tensor probs = random_probs(rng, 2, 2, 2, 2);
    std::vector<int> target(8);
    for (auto& t : target) t = static_cast<int>(rng.uniform_int(0, 1));
    Tensor pn = Tensor::randn(rng, {1, 2, 2, 2});
    Tensor tn = Tensor::randn(rng, {1, 2, 2, 2});
    LossWeights w2;
    w2.gamma = 0.8;
    w2.lambda = 1.7;
    LossReport r = compute_losses(probs, target, pn, tn, w2);
    CHECK(std::abs(r.total - (r.l1 + w2.lambda * r.l2)) < 1e-9);
    CHECK(std::abs(r.l1 - (r.l_ce + w2.gamma * r.l_dsc)) < 1e-9);
    CHECK(r.l_ce >= 0.0);
    CHECK(r.l_dsc >= 0.0);
    CHECK(r.l2 >= 0.0);
    CHECK(r.per_class_dice.size() == 2);
}

TEST_CASE("loss gradients w.r.t. network outputs match finite differences") {
    Rng rng(65);
    // logits as the free network output; probs via channel softmax
    ad::Var logits = ad::make_param(Tensor::randn(rng, {1, 2, 2, 2, 2}));
    std::vector<int> target(8);
    for (auto& t : target) t = static_cast<int>(rng.uniform_int(0, 1));
    auto l1_loss = [&] {
        ad::Var probs = softmax_channels(logits);
        SegLossTerms seg = segmentation_loss(probs, target, 1.3);
        return seg.l1;
    };
    CHECK(tgseg::testing::gradcheck({logits}, l1_loss) < 1e-3);

    ad::Var pred = ad::make_param(Tensor::randn(rng, {2, 2, 2, 2}));
    Tensor noise = Tensor::randn(rng, {2, 2, 2, 2});
    auto l2_loss = [&] { return denoiser_loss(pred, noise); };
    CHECK(tgseg::testing::gradcheck({pred}, l2_loss) < 1e-3);
}

TEST_CASE("invalid loss weights are rejected") {
    LossWeights w;
    w.lambda = -1.0;
    ad::Var a = ad::constant(Tensor::scalar(1.0));
    CHECK_THROWS_AS(total_loss(a, a, w), ValidationError);
}
