#include "tgseg/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace tgseg {

namespace {
const char* kBuiltinTokens[] = {
    "<pad>",      "<oov>",    "segment",  "the",       "a",        "an",
    "sphere",     "spherical", "ball",    "round",     "cuboid",   "box",
    "rectangular", "block",   "ellipsoid", "ellipsoidal", "elongated", "oval",
    "lesion",     "mass",     "object",   "structure", "target",   "region",
    "in",         "of",       "upper",    "lower",     "central",  "left",
    "right",      "anterior", "posterior", "and",      "not",      "middle",
};
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[0] != "<pad>" || tokens_[1] != "<oov>")
        throw ValidationError("vocabulary must start with <pad> and <oov>");
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw ValidationError("duplicate vocabulary token: " + tokens_[i]);
    }
}

Vocabulary Vocabulary::builtin() {
    std::vector<std::string> t(std::begin(kBuiltinTokens), std::end(kBuiltinTokens));
    return Vocabulary(std::move(t));
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open vocabulary: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write vocabulary: " + path);
    for (const auto& t : tokens_) os << t << "\n";
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? oov_id() : it->second;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::vector<int> tokenize(const TextPrompt& prompt, const Vocabulary& vocab, int max_tokens) {
    const std::vector<std::string> words = split_words(prompt.text);
    if (words.empty()) throw ValidationError("empty prompt");
    if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(max_tokens));
    for (const auto& w : words) {
        if (static_cast<int>(ids.size()) == max_tokens) break;
        ids.push_back(vocab.id(w));
    }
    while (static_cast<int>(ids.size()) < max_tokens) ids.push_back(vocab.pad_id());
    return ids;
}

TextEncoder::TextEncoder(nn::ParamStore& ps, const std::string& prefix, const Vocabulary& vocab,
                         TextEncoderConfig cfg, Rng& rng)
    : cfg_(cfg), vocab_(vocab), heads_(cfg.heads) {
    if (cfg.embed_dim % cfg.heads) throw ShapeError("text encoder: embed_dim % heads != 0");
    table_ = ps.param(prefix + ".table",
                      Tensor::randn(rng, {vocab.size(), cfg.embed_dim}, 0.1));
    qkv_ = nn::Linear::create(ps, prefix + ".qkv", cfg.embed_dim, 3 * cfg.embed_dim, rng);
    attn_proj_ = nn::Linear::create(ps, prefix + ".attn_proj", cfg.embed_dim, cfg.embed_dim, rng);
    out_proj_ = nn::Linear::create(ps, prefix + ".out", cfg.embed_dim, cfg.d_t, rng);
    initialized_ = true;
}

const Vocabulary& TextEncoder::vocab() const {
    if (!vocab_) throw StateError("text encoder not initialized");
    return *vocab_;
}

void TextEncoder::set_adapter(ClinicalBackboneAdapter adapter, std::string adapter_id) {
    adapter_ = std::move(adapter);
    adapter_id_ = std::move(adapter_id);
}

TextEncoder::Output TextEncoder::forward(const TextPrompt& prompt) const {
    if (!initialized_) throw StateError("text encoder not initialized");
    if (adapter_) {
        Tensor v = adapter_(prompt.text);
        if (v.numel() != cfg_.d_t)
            throw ShapeError("clinical backbone adapter returned width " +
                             std::to_string(v.numel()) + ", expected " + std::to_string(cfg_.d_t));
        ad::check_finite(v, "adapter text embedding");
        ad::Var row = ad::constant(v.reshaped({1, cfg_.d_t}));
        return {row, row};
    }
    return forward_ids(tokenize(prompt, *vocab_, cfg_.max_tokens));
}

TextEncoder::Output TextEncoder::forward_ids(const std::vector<int>& padded_ids) const {
    if (!initialized_) throw StateError("text encoder not initialized");
    // pads only occur as a suffix; attention runs on the non-pad prefix
    std::vector<int> ids;
    for (int id : padded_ids)
        if (id != vocab_->pad_id()) ids.push_back(id);
    if (ids.empty()) throw ValidationError("prompt has no non-pad tokens");
    const int L = static_cast<int>(ids.size());
    const int E = cfg_.embed_dim;
    const int dh = E / heads_;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    ad::Var seq = ad::embedding(table_, ids);  // [L, E]
    ad::Var qkv = qkv_.forward(seq);           // [L, 3E]
    std::vector<ad::Var> head_outs;
    head_outs.reserve(static_cast<size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
        ad::Var q = ad::slice_cols(qkv, h * dh, (h + 1) * dh);
        ad::Var k = ad::slice_cols(qkv, E + h * dh, E + (h + 1) * dh);
        ad::Var v = ad::slice_cols(qkv, 2 * E + h * dh, 2 * E + (h + 1) * dh);
        ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose2d(k)), inv_sqrt));
        head_outs.push_back(ad::matmul(attn, v));
    }
    ad::Var merged = heads_ == 1 ? head_outs[0] : ad::concat_cols(head_outs);
    ad::Var mixed = ad::add(seq, attn_proj_.forward(merged));  // residual
    ad::Var tokens_dt = out_proj_.forward(mixed);              // [L, d_t]
    // masked mean pool == plain mean over the non-pad prefix
    ad::Var ones = ad::constant(Tensor::full({1, L}, 1.0 / static_cast<double>(L)));
    ad::Var pooled = ad::matmul(ones, tokens_dt);  // [1, d_t]
    if (ad::debug::check_numerics) ad::check_finite(pooled, "text embedding");
    return {pooled, tokens_dt};
}

TextEmbedding TextEncoder::encode(const TextPrompt& prompt) const {
    ad::NoGradGuard ng;
    Output out = forward(prompt);
    TextEmbedding e;
    e.vector = out.pooled.val().reshaped({cfg_.d_t});
    e.encoder_id = adapter_ ? "adapter:" + adapter_id_ : "builtin-v1";
    return e;
}

}  // namespace tgseg
