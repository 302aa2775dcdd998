#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <unordered_map>
#include <vector>

#include "soilgen/nn/layers.hpp"

namespace soilgen::props {

struct Token {
    bool numeric = false;
    std::string word;    // word kind (lowercased)
    double value = 0.0;  // numeric kind
};

struct PropertySentence {
    std::string raw;
    std::vector<Token> tokens;
};

/// Magnitude compression for numeric tokens: sign(v) * log10(1 + |v|).
double numeric_scale(double v);

/// Lowercases, strips colons, splits on whitespace; maximal decimal
/// substrings become numeric tokens, everything else word tokens
/// ("mg/kg" stays one word).
PropertySentence tokenize(const std::string& text);

/// Word -> id map with three reserved rows. Frozen after corpus
/// construction; unseen words resolve to the unknown id.
class Dictionary {
public:
    static constexpr int64_t kUnknown = 0;
    static constexpr int64_t kNumericTag = 1;
    static constexpr int64_t kNull = 2;
    static constexpr int64_t kReserved = 3;

    Dictionary() = default;

    void absorb(const PropertySentence& s);  // register unseen word tokens
    int64_t id_of(const std::string& word) const;
    int64_t size() const { return kReserved + static_cast<int64_t>(words_.size()); }

    nlohmann::json to_json() const;
    static Dictionary from_json(const nlohmann::json& j);

private:
    std::unordered_map<std::string, int64_t> map_;
    std::vector<std::string> words_;  // id order, offset by kReserved
};

struct EncoderConfig {
    int64_t d_model = 128;
    int heads = 4;
    int sentence_layers = 2;
    int set_layers = 2;
    int64_t ffn_hidden = 256;
};

/// Conditioning produced from one batch of property sets.
struct Conditioning {
    nn::Var seq;      // [B, S_max, D] contextual sentence embeddings
    nn::Tensor mask;  // [B, S_max] 1 = real sentence
    nn::Var pooled;   // [B, D] masked mean over sentences
};

/// Two-stage text encoder: a positional transformer pools tokens into
/// sentence vectors, then an order-free transformer mixes sentences.
class PropertyEncoder {
public:
    PropertyEncoder(nn::ParameterStore& ps, nn::Rng& rng, Dictionary dict,
                    EncoderConfig cfg = {});

    /// null_flags[b] != 0 replaces sample b's set with the learned null
    /// sentence (also used when a flagged sample has no sentences).
    Conditioning encode(const std::vector<std::vector<PropertySentence>>& batch,
                        const std::vector<uint8_t>& null_flags = {}) const;

    /// Sentence stage only: one vector per sentence. [S, D]
    nn::Var embed_sentences(const std::vector<PropertySentence>& sents) const;

    const EncoderConfig& config() const { return cfg_; }
    const Dictionary& dictionary() const { return dict_; }

private:
    struct TokenRows;  // flattened (ids, scales, selectors, mask)

    TokenRows lower_sentences(const std::vector<const PropertySentence*>& sents,
                              const std::vector<uint8_t>& is_null) const;
    nn::Var run_sentence_stage(const TokenRows& rows) const;

    Dictionary dict_;
    EncoderConfig cfg_;
    nn::Parameter* table_;
    nn::Parameter* num_w_;
    nn::Parameter* num_b_;
    std::vector<nn::TransformerLayer> sent_layers_;
    nn::LayerNormLayer sent_ln_;
    std::vector<nn::TransformerLayer> set_layers_;
    nn::LayerNormLayer set_ln_;
};

}  // namespace soilgen::props
