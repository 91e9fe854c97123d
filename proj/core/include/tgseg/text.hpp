#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgseg/nn.hpp"

namespace tgseg {

struct TextPrompt {
    std::string text;
    std::string language = "en";
};

struct TextEmbedding {
    Tensor vector;  // [d_t]
    std::string encoder_id;
};

// Fixed token list; line number = id. Rows 0 and 1 are reserved for the pad
// and out-of-vocabulary tokens.
class Vocabulary {
public:
    static Vocabulary builtin();
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int pad_id() const { return 0; }
    int oov_id() const { return 1; }
    int size() const { return static_cast<int>(tokens_.size()); }
    int id(const std::string& token) const;
    const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Lowercases, splits on whitespace/punctuation, maps through the vocabulary
// and pads/truncates to max_tokens. Empty prompts are invalid.
std::vector<int> tokenize(const TextPrompt& prompt, const Vocabulary& vocab, int max_tokens);
std::vector<std::string> split_words(const std::string& text);

// Drop-in replacement point for an external clinical language backbone:
// any callable string -> vector of width d_t.
using ClinicalBackboneAdapter = std::function<Tensor(const std::string& text)>;

struct TextEncoderConfig {
    int d_t = 64;
    int embed_dim = 32;
    int max_tokens = 16;
    int heads = 2;
};

// Trainable prompt encoder: token embedding table -> one self-attention
// block -> per-token projection to d_t -> masked mean pool. Pad positions
// are dropped before attention, so padding can never leak into the output.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(nn::ParamStore& ps, const std::string& prefix, const Vocabulary& vocab,
                TextEncoderConfig cfg, Rng& rng);

    struct Output {
        ad::Var pooled;  // [1, d_t]
        ad::Var tokens;  // [L_eff, d_t]
    };
    // Differentiable path; used by training and (under NoGradGuard) inference.
    Output forward(const TextPrompt& prompt) const;
    // Same, from an already padded id sequence (trailing pad ids are inert).
    Output forward_ids(const std::vector<int>& padded_ids) const;

    // Evaluation-mode convenience returning the pooled embedding.
    TextEmbedding encode(const TextPrompt& prompt) const;

    void set_adapter(ClinicalBackboneAdapter adapter, std::string adapter_id);
    bool has_adapter() const { return static_cast<bool>(adapter_); }

    const Vocabulary& vocab() const;
    const TextEncoderConfig& config() const { return cfg_; }
    bool initialized() const { return initialized_; }

private:
    TextEncoderConfig cfg_;
    std::optional<Vocabulary> vocab_;
    ad::Var table_;        // [V, embed_dim]
    nn::Linear qkv_, attn_proj_, out_proj_;
    int heads_ = 1;
    ClinicalBackboneAdapter adapter_;
    std::string adapter_id_;
    bool initialized_ = false;
};

}  // namespace tgseg
