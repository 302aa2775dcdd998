#include "soilgen/properties.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "soilgen/common.hpp"

namespace soilgen::props {

using nn::Tensor;
using nn::Var;

double numeric_scale(double v) {
    SG_CHECK(std::isfinite(v), value_error, "numeric token value must be finite, got ", v);
    return (v < 0 ? -1.0 : 1.0) * std::log10(1.0 + std::abs(v));
}

namespace {

bool number_may_start(const std::string& piece, size_t i) {
    if (i == 0) return true;
    unsigned char prev = static_cast<unsigned char>(piece[i - 1]);
    return !std::isalnum(prev) && piece[i - 1] != '.';
}

// Length of the decimal literal at position i (0 when none): optional sign,
// digits with at most one dot, at least one digit.
size_t number_len(const std::string& piece, size_t i) {
    size_t j = i;
    if (j < piece.size() && (piece[j] == '+' || piece[j] == '-')) ++j;
    size_t digits = 0;
    bool dot = false;
    while (j < piece.size()) {
        unsigned char c = static_cast<unsigned char>(piece[j]);
        if (std::isdigit(c)) {
            ++digits;
        } else if (piece[j] == '.' && !dot) {
            dot = true;
        } else {
            break;
        }
        ++j;
    }
    return digits > 0 ? j - i : 0;
}

void emit_piece(const std::string& piece, std::vector<Token>& out) {
    size_t i = 0;
    while (i < piece.size()) {
        if (number_may_start(piece, i)) {
            size_t len = number_len(piece, i);
            if (len > 0) {
                Token t;
                t.numeric = true;
                t.value = std::strtod(piece.substr(i, len).c_str(), nullptr);
                out.push_back(std::move(t));
                i += len;
                continue;
            }
        }
        size_t j = i + 1;
        while (j < piece.size() && !(number_may_start(piece, j) && number_len(piece, j) > 0))
            ++j;
        Token t;
        t.word = piece.substr(i, j - i);
        out.push_back(std::move(t));
        i = j;
    }
}

}  // namespace

PropertySentence tokenize(const std::string& text) {
    SG_CHECK(!text.empty(), precondition_error, "cannot tokenize empty text");
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        if (c == ':') {
            lowered.push_back(' ');
        } else {
            lowered.push_back(
                static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }

    PropertySentence s;
    s.raw = text;
    size_t i = 0;
    while (i < lowered.size()) {
        while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
        size_t j = i;
        while (j < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[j]))) ++j;
        if (j > i) emit_piece(lowered.substr(i, j - i), s.tokens);
        i = j;
    }
    return s;
}

void Dictionary::absorb(const PropertySentence& s) {
    for (const Token& t : s.tokens) {
        if (t.numeric || map_.count(t.word)) continue;
        map_.emplace(t.word, kReserved + static_cast<int64_t>(words_.size()));
        words_.push_back(t.word);
    }
}

int64_t Dictionary::id_of(const std::string& word) const {
    auto it = map_.find(word);
    return it == map_.end() ? kUnknown : it->second;
}

nlohmann::json Dictionary::to_json() const {
    nlohmann::json words = nlohmann::json::object();
    for (const auto& [w, id] : map_) words[w] = id;
    return nlohmann::json{{"version", 1}, {"words", words}};
}

Dictionary Dictionary::from_json(const nlohmann::json& j) {
    SG_CHECK(j.is_object() && j.contains("words") && j.at("words").is_object(), io_error,
             "dictionary json must hold a 'words' object");
    const auto& words = j.at("words");
    Dictionary d;
    d.words_.resize(words.size());
    for (const auto& [w, idj] : words.items()) {
        SG_CHECK(idj.is_number_integer(), io_error, "dictionary id for '", w,
                 "' is not an integer");
        int64_t id = idj.get<int64_t>();
        SG_CHECK(id >= kReserved && id < kReserved + static_cast<int64_t>(words.size()),
                 io_error, "dictionary id ", id, " for '", w, "' out of range");
        size_t slot = static_cast<size_t>(id - kReserved);
        SG_CHECK(d.words_[slot].empty(), io_error, "duplicate dictionary id ", id);
        d.words_[slot] = w;
        d.map_.emplace(w, id);
    }
    return d;
}

struct PropertyEncoder::TokenRows {
    std::vector<int64_t> ids;  // [S*T]
    Tensor gvals;              // [S*T] scale applied to the table row
    Tensor sel_g;              // [S*T] g(v) at numeric tokens, else 0
    Tensor sel_1;              // [S*T] 1 at numeric tokens, else 0
    Tensor mask;               // [S, T]
    int64_t S = 0, T = 0;
};

PropertyEncoder::PropertyEncoder(nn::ParameterStore& ps, nn::Rng& rng, Dictionary dict,
                                 EncoderConfig cfg)
    : dict_(std::move(dict)),
      cfg_(cfg),
      sent_ln_(ps, "prop.sent.ln_out", cfg.d_model),
      set_ln_(ps, "prop.set.ln_out", cfg.d_model) {
    SG_CHECK(cfg.d_model > 0 && cfg.heads > 0 && cfg.d_model % cfg.heads == 0, value_error,
             "d_model ", cfg.d_model, " must be divisible by heads ", cfg.heads);
    SG_CHECK(cfg.sentence_layers > 0 && cfg.set_layers > 0, value_error,
             "encoder needs at least one layer per stage");

    table_ = &ps.create("prop.table", {dict_.size(), cfg.d_model});
    nn::init_trunc_normal(table_->value, rng, 0.02);
    num_w_ = &ps.create("prop.num.w", {cfg.d_model});
    nn::init_trunc_normal(num_w_->value, rng, 0.02);
    num_b_ = &ps.create("prop.num.b", {cfg.d_model});

    sent_layers_.reserve(static_cast<size_t>(cfg.sentence_layers));
    for (int i = 0; i < cfg.sentence_layers; ++i)
        sent_layers_.emplace_back(ps, rng, "prop.sent.l" + std::to_string(i), cfg.d_model,
                                  cfg.heads, cfg.ffn_hidden, false);
    set_layers_.reserve(static_cast<size_t>(cfg.set_layers));
    for (int i = 0; i < cfg.set_layers; ++i)
        set_layers_.emplace_back(ps, rng, "prop.set.l" + std::to_string(i), cfg.d_model,
                                 cfg.heads, cfg.ffn_hidden, false);
}

PropertyEncoder::TokenRows PropertyEncoder::lower_sentences(
    const std::vector<const PropertySentence*>& sents,
    const std::vector<uint8_t>& is_null) const {
    const int64_t S = static_cast<int64_t>(sents.size());
    int64_t T = 1;
    for (int64_t s = 0; s < S; ++s) {
        if (is_null[static_cast<size_t>(s)]) continue;
        const PropertySentence* p = sents[static_cast<size_t>(s)];
        SG_CHECK(!p->tokens.empty(), precondition_error, "sentence with no tokens: '",
                 p->raw, "'");
        T = std::max(T, static_cast<int64_t>(p->tokens.size()));
    }

    TokenRows rows;
    rows.S = S;
    rows.T = T;
    rows.ids.assign(static_cast<size_t>(S * T), Dictionary::kUnknown);
    rows.gvals = Tensor::zeros({S * T});
    rows.sel_g = Tensor::zeros({S * T});
    rows.sel_1 = Tensor::zeros({S * T});
    rows.mask = Tensor::zeros({S, T});

    for (int64_t s = 0; s < S; ++s) {
        if (is_null[static_cast<size_t>(s)]) {
            size_t at = static_cast<size_t>(s * T);
            rows.ids[at] = Dictionary::kNull;
            rows.gvals.data()[at] = 1.0;
            rows.mask.data()[at] = 1.0;
            continue;
        }
        const auto& toks = sents[static_cast<size_t>(s)]->tokens;
        for (size_t t = 0; t < toks.size(); ++t) {
            size_t at = static_cast<size_t>(s * T) + t;
            rows.mask.data()[at] = 1.0;
            if (toks[t].numeric) {
                double g = numeric_scale(toks[t].value);
                rows.ids[at] = Dictionary::kNumericTag;
                rows.gvals.data()[at] = g;
                rows.sel_g.data()[at] = g;
                rows.sel_1.data()[at] = 1.0;
            } else {
                rows.ids[at] = dict_.id_of(toks[t].word);
                rows.gvals.data()[at] = 1.0;
            }
        }
    }
    return rows;
}

Var PropertyEncoder::run_sentence_stage(const TokenRows& rows) const {
    const int64_t D = cfg_.d_model;
    Var x = nn::row_scale(nn::embedding(Var::param(*table_), rows.ids), rows.gvals);
    x = nn::add(x, nn::outer_const(rows.sel_g, Var::param(*num_w_)));
    x = nn::add(x, nn::outer_const(rows.sel_1, Var::param(*num_b_)));

    std::vector<double> pos(static_cast<size_t>(rows.T));
    std::iota(pos.begin(), pos.end(), 0.0);
    Tensor pe = nn::sinusoidal_embedding(pos, D);  // [T, D]
    Tensor tiled({rows.S * rows.T, D});
    for (int64_t s = 0; s < rows.S; ++s)
        std::copy(pe.data(), pe.data() + rows.T * D,
                  tiled.data() + s * rows.T * D);
    x = nn::add(x, Var::constant(std::move(tiled)));

    x = nn::reshape(x, {rows.S, rows.T, D});
    for (const auto& layer : sent_layers_) x = layer.forward(x, rows.mask);
    x = sent_ln_.forward(x);
    return nn::masked_mean_rows(x, rows.mask);  // [S, D]
}

Var PropertyEncoder::embed_sentences(const std::vector<PropertySentence>& sents) const {
    SG_CHECK(!sents.empty(), precondition_error, "no sentences to embed");
    std::vector<const PropertySentence*> ptrs;
    ptrs.reserve(sents.size());
    for (const auto& s : sents) ptrs.push_back(&s);
    return run_sentence_stage(lower_sentences(ptrs, std::vector<uint8_t>(sents.size(), 0)));
}

Conditioning PropertyEncoder::encode(const std::vector<std::vector<PropertySentence>>& batch,
                                     const std::vector<uint8_t>& null_flags) const {
    const int64_t B = static_cast<int64_t>(batch.size());
    SG_CHECK(B > 0, precondition_error, "empty batch");
    SG_CHECK(null_flags.empty() || null_flags.size() == batch.size(), shape_error,
             "null_flags size ", null_flags.size(), " != batch size ", batch.size());

    std::vector<const PropertySentence*> flat;
    std::vector<uint8_t> flat_null;
    std::vector<int64_t> counts(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        bool nul = !null_flags.empty() && null_flags[static_cast<size_t>(b)];
        if (nul) {
            flat.push_back(nullptr);
            flat_null.push_back(1);
            counts[static_cast<size_t>(b)] = 1;
            continue;
        }
        const auto& set = batch[static_cast<size_t>(b)];
        SG_CHECK(!set.empty(), precondition_error, "sample ", b,
                 " has an empty property set; flag it null instead");
        for (const auto& s : set) {
            flat.push_back(&s);
            flat_null.push_back(0);
        }
        counts[static_cast<size_t>(b)] = static_cast<int64_t>(set.size());
    }

    Var sent = run_sentence_stage(lower_sentences(flat, flat_null));  // [N, D]

    const int64_t S_max = *std::max_element(counts.begin(), counts.end());
    std::vector<int64_t> idx(static_cast<size_t>(B * S_max), -1);
    Tensor smask = Tensor::zeros({B, S_max});
    int64_t next = 0;
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t s = 0; s < counts[static_cast<size_t>(b)]; ++s) {
            idx[static_cast<size_t>(b * S_max + s)] = next++;
            smask.data()[b * S_max + s] = 1.0;
        }
    }

    Var ctx = nn::reshape(nn::gather_rows(sent, idx), {B, S_max, cfg_.d_model});
    for (const auto& layer : set_layers_) ctx = layer.forward(ctx, smask);
    ctx = set_ln_.forward(ctx);

    Conditioning out;
    out.seq = ctx;
    out.mask = smask;
    out.pooled = nn::masked_mean_rows(ctx, smask);
    return out;
}

}  // namespace soilgen::props
