#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tgseg/text.hpp"

using namespace tgseg;

TEST_CASE("tokenize folds case and strips punctuation") {
    Vocabulary v = Vocabulary::builtin();
    TextPrompt a{"Segment the sphere."};
    TextPrompt b{"segment the sphere"};
    CHECK(tokenize(a, v, 8) == tokenize(b, v, 8));
}

TEST_CASE("tokenize maps unknown words to the oov id") {
    Vocabulary v = Vocabulary::builtin();
    auto ids = tokenize(TextPrompt{"segment xyzzy lesion"}, v, 8);
    CHECK(ids[0] == v.id("segment"));
    CHECK(ids[1] == v.oov_id());
    CHECK(ids[2] == v.id("lesion"));
    CHECK(ids[3] == v.pad_id());
}

TEST_CASE("tokenize: exactly max_tokens known words leaves no pads") {
    Vocabulary v = Vocabulary::builtin();
    auto ids = tokenize(TextPrompt{"segment the round lesion"}, v, 4);
    CHECK(ids.size() == 4);
    for (int id : ids) CHECK(id != v.pad_id());
}

TEST_CASE("tokenize rejects empty prompts") {
    Vocabulary v = Vocabulary::builtin();
    CHECK_THROWS_AS(tokenize(TextPrompt{"   "}, v, 8), ValidationError);
    CHECK_THROWS_AS(tokenize(TextPrompt{""}, v, 8), ValidationError);
}

TEST_CASE("vocabulary save/load round trip preserves ids") {
    Vocabulary v = Vocabulary::builtin();
    const std::string p = "/tmp/tgseg_test_vocab.txt";
    v.save(p);
    Vocabulary r = Vocabulary::load(p);
    CHECK(r.size() == v.size());
    CHECK(r.id("segment") == v.id("segment"));
    CHECK(r.pad_id() == 0);
    CHECK(r.oov_id() == 1);
}

TEST_CASE("encoder determinism and width") {
    Rng rng(31);
    nn::ParamStore ps;
    TextEncoderConfig cfg;
    cfg.d_t = 16;
    cfg.embed_dim = 8;
    TextEncoder enc(ps, "text", Vocabulary::builtin(), cfg, rng);
    TextEmbedding a = enc.encode(TextPrompt{"segment the spherical lesion"});
    TextEmbedding b = enc.encode(TextPrompt{"segment the spherical lesion"});
    CHECK(a.vector.shape == Shape{16});
    CHECK(a.vector.data == b.vector.data);
    TextEmbedding c = enc.encode(TextPrompt{"segment the rectangular lesion"});
    CHECK(c.vector.data != a.vector.data);
    CHECK(c.vector.shape == a.vector.shape);  // constant width across prompts
}

TEST_CASE("padding invariance: appending pad ids never changes the embedding") {
    Rng rng(32);
    nn::ParamStore ps;
    TextEncoderConfig cfg;
    cfg.d_t = 12;
    cfg.embed_dim = 8;
    cfg.max_tokens = 16;
    TextEncoder enc(ps, "text", Vocabulary::builtin(), cfg, rng);
    const Vocabulary& v = enc.vocab();
    std::vector<int> ids{v.id("segment"), v.id("the"), v.id("ball")};
    std::vector<int> short_pad = ids;
    short_pad.push_back(v.pad_id());
    std::vector<int> long_pad = ids;
    for (int i = 0; i < 13; ++i) long_pad.push_back(v.pad_id());
    ad::NoGradGuard ng;
    Tensor a = enc.forward_ids(short_pad).pooled.val();
    Tensor b = enc.forward_ids(long_pad).pooled.val();
    CHECK(a.data == b.data);
}

TEST_CASE("all-zero parameters produce the zero embedding") {
    Rng rng(33);
    nn::ParamStore ps;
    TextEncoderConfig cfg;
    cfg.d_t = 8;
    cfg.embed_dim = 4;
    TextEncoder enc(ps, "text", Vocabulary::builtin(), cfg, rng);
    for (const auto& [name, var] : ps.params())
        std::fill(var.node()->value.data.begin(), var.node()->value.data.end(), 0.0);
    TextEmbedding e = enc.encode(TextPrompt{"segment the sphere"});
    for (double x : e.vector.data) CHECK(x == 0.0);
}

TEST_CASE("encoder gradient matches finite differences (4-token prompt, d_t=8)") {
    Rng rng(34);
    nn::ParamStore ps;
    TextEncoderConfig cfg;
    cfg.d_t = 8;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    TextEncoder enc(ps, "text", Vocabulary::builtin(), cfg, rng);
    TextPrompt prompt{"segment the spherical lesion"};  // 4 tokens
    Tensor target = Tensor::randn(rng, {1, 8});
    auto loss = [&] {
        ad::Var z = enc.forward(prompt).pooled;
        ad::Var d = ad::sub(z, ad::constant(target));
        return ad::mean_all(ad::mul(d, d));
    };
    std::vector<ad::Var> params;
    for (const auto& [name, var] : ps.params()) params.push_back(var);
    CHECK(tgseg::testing::gradcheck(params, loss) < 1e-3);
}

TEST_CASE("clinical backbone adapter takes over encoding") {
    Rng rng(35);
    nn::ParamStore ps;
    TextEncoderConfig cfg;
    cfg.d_t = 4;
    TextEncoder enc(ps, "text", Vocabulary::builtin(), cfg, rng);
    enc.set_adapter(
        [](const std::string& text) {
            Tensor t({4});
            t[0] = static_cast<double>(text.size());
            return t;
        },
        "stub");
    TextEmbedding e = enc.encode(TextPrompt{"abcde"});
    CHECK(e.encoder_id == "adapter:stub");
    CHECK(e.vector[0] == 5.0);
    // width mismatches are rejected
    enc.set_adapter([](const std::string&) { return Tensor({3}); }, "bad");
    CHECK_THROWS_AS(enc.encode(TextPrompt{"x"}), ShapeError);
}

TEST_CASE("uninitialized encoder is a state error") {
    TextEncoder enc;
    CHECK_THROWS_AS(enc.encode(TextPrompt{"segment"}), StateError);
}
