#pragma once

// Small BERT-style bidirectional encoder: token + position + segment
// embeddings, embedding layer norm, then post-LN transformer blocks.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/checkpoint.hpp"
#include "hnn/errors.hpp"
#include "hnn/tensor.hpp"

namespace hnn {

inline constexpr std::size_t kMaxPositionsCap = 512;

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 32;
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t ffn_multiplier = 4;
    std::size_t max_positions = 64;
    std::size_t num_segments = 2;
    double layer_norm_eps = 1e-12;
    double dropout = 0.0;
    double init_stddev = 0.02;
    bool tie_mlm_weights = false;

    std::size_t head_dim() const { return d_model / num_heads; }

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            if (v == 0) {
                throw ConfigError(std::string("encoder.") + name + " must be positive");
            }
        };
        positive(vocab_size, "vocab_size");
        positive(d_model, "d_model");
        positive(num_layers, "num_layers");
        positive(num_heads, "num_heads");
        positive(ffn_multiplier, "ffn_multiplier");
        positive(max_positions, "max_positions");
        if (d_model % num_heads != 0) {
            throw ConfigError("encoder.d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                              std::to_string(num_heads) + ")");
        }
        if (max_positions > kMaxPositionsCap) {
            throw ConfigError("encoder.max_positions must not exceed 512");
        }
        if (num_segments != 2) {
            throw ConfigError("encoder.num_segments must be 2");
        }
        if (!(layer_norm_eps > 0.0)) {
            throw ConfigError("encoder.layer_norm_eps must be positive");
        }
        if (dropout < 0.0 || dropout >= 1.0) {
            throw ConfigError("encoder.dropout must lie in [0, 1)");
        }
        if (!(init_stddev > 0.0)) {
            throw ConfigError("encoder.init_stddev must be positive");
        }
    }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"d_model", c.d_model},
                       {"num_layers", c.num_layers},
                       {"num_heads", c.num_heads},
                       {"ffn_multiplier", c.ffn_multiplier},
                       {"max_positions", c.max_positions},
                       {"num_segments", c.num_segments},
                       {"layer_norm_eps", c.layer_norm_eps},
                       {"dropout", c.dropout},
                       {"init_stddev", c.init_stddev},
                       {"tie_mlm_weights", c.tie_mlm_weights}};
}

/// Overlays the fields present in `j` onto `c`; unknown keys are rejected.
inline void merge_json(const nlohmann::json& j, EncoderConfig& c) {
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "vocab_size") c.vocab_size = v.get<std::size_t>();
            else if (key == "d_model") c.d_model = v.get<std::size_t>();
            else if (key == "num_layers") c.num_layers = v.get<std::size_t>();
            else if (key == "num_heads") c.num_heads = v.get<std::size_t>();
            else if (key == "ffn_multiplier") c.ffn_multiplier = v.get<std::size_t>();
            else if (key == "max_positions") c.max_positions = v.get<std::size_t>();
            else if (key == "num_segments") c.num_segments = v.get<std::size_t>();
            else if (key == "layer_norm_eps") c.layer_norm_eps = v.get<double>();
            else if (key == "dropout") c.dropout = v.get<double>();
            else if (key == "init_stddev") c.init_stddev = v.get<double>();
            else if (key == "tie_mlm_weights") c.tie_mlm_weights = v.get<bool>();
            else throw ConfigError("unknown encoder field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("encoder." + key + ": " + e.what());
        }
    }
}

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln_attn_gain, ln_attn_bias;
    Tensor ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
    Tensor ln_ffn_gain, ln_ffn_bias;
};

struct EncoderParams {
    Tensor token_embeddings;     // [vocab x d]
    Tensor position_embeddings;  // [max_positions x d]
    Tensor segment_embeddings;   // [2 x d]
    Tensor emb_ln_gain, emb_ln_bias;
    std::vector<LayerParams> layers;
    Tensor mlm_weight;  // [d x vocab], unused when tied
    Tensor mlm_bias;    // [vocab]

    static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        const std::size_t d = cfg.d_model, ff = cfg.d_model * cfg.ffn_multiplier;
        auto normal = [&](Shape s) { return init_truncated_normal(std::move(s), 0.0, cfg.init_stddev, 2.0, rng); };
        auto zeros = [](Shape s) { return Tensor::zeros(std::move(s), true); };
        auto ones = [](Shape s) { return Tensor::full(std::move(s), 1.0, true); };
        EncoderParams p;
        p.token_embeddings = normal({cfg.vocab_size, d});
        p.position_embeddings = normal({cfg.max_positions, d});
        p.segment_embeddings = normal({cfg.num_segments, d});
        p.emb_ln_gain = ones({d});
        p.emb_ln_bias = zeros({d});
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            LayerParams lp;
            lp.wq = normal({d, d});
            lp.bq = zeros({d});
            lp.wk = normal({d, d});
            lp.bk = zeros({d});
            lp.wv = normal({d, d});
            lp.bv = zeros({d});
            lp.wo = normal({d, d});
            lp.bo = zeros({d});
            lp.ln_attn_gain = ones({d});
            lp.ln_attn_bias = zeros({d});
            lp.ffn_in_w = normal({d, ff});
            lp.ffn_in_b = zeros({ff});
            lp.ffn_out_w = normal({ff, d});
            lp.ffn_out_b = zeros({d});
            lp.ln_ffn_gain = ones({d});
            lp.ln_ffn_bias = zeros({d});
            p.layers.push_back(std::move(lp));
        }
        if (!cfg.tie_mlm_weights) {
            p.mlm_weight = normal({d, cfg.vocab_size});
        }
        p.mlm_bias = zeros({cfg.vocab_size});
        return p;
    }

    NamedTensors named() const {
        NamedTensors out{{"embeddings.token", token_embeddings},
                         {"embeddings.position", position_embeddings},
                         {"embeddings.segment", segment_embeddings},
                         {"embeddings.ln.gain", emb_ln_gain},
                         {"embeddings.ln.bias", emb_ln_bias}};
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& lp = layers[l];
            const std::string pre = "layer" + std::to_string(l) + ".";
            out.insert(out.end(), {{pre + "attn.wq", lp.wq},
                                   {pre + "attn.bq", lp.bq},
                                   {pre + "attn.wk", lp.wk},
                                   {pre + "attn.bk", lp.bk},
                                   {pre + "attn.wv", lp.wv},
                                   {pre + "attn.bv", lp.bv},
                                   {pre + "attn.wo", lp.wo},
                                   {pre + "attn.bo", lp.bo},
                                   {pre + "attn.ln.gain", lp.ln_attn_gain},
                                   {pre + "attn.ln.bias", lp.ln_attn_bias},
                                   {pre + "ffn.in.w", lp.ffn_in_w},
                                   {pre + "ffn.in.b", lp.ffn_in_b},
                                   {pre + "ffn.out.w", lp.ffn_out_w},
                                   {pre + "ffn.out.b", lp.ffn_out_b},
                                   {pre + "ffn.ln.gain", lp.ln_ffn_gain},
                                   {pre + "ffn.ln.bias", lp.ln_ffn_bias}});
        }
        if (mlm_weight.defined()) {
            out.emplace_back("mlm.weight", mlm_weight);
        }
        out.emplace_back("mlm.bias", mlm_bias);
        return out;
    }
};

struct EncoderInput {
    std::vector<std::size_t> token_ids;
    std::vector<std::size_t> segment_ids;
    std::vector<bool> attention_mask;  // false marks padding

    static EncoderInput unpadded(std::vector<std::size_t> tokens, std::vector<std::size_t> segments) {
        EncoderInput in;
        in.attention_mask.assign(tokens.size(), true);
        in.token_ids = std::move(tokens);
        in.segment_ids = std::move(segments);
        return in;
    }
};

/// Post-softmax attention probabilities, per layer then per head, each [len x len].
struct EncodeTrace {
    std::vector<std::vector<Tensor>> attention;
};

inline constexpr double kMaskedScore = -1e30;

/// Contextual embeddings [len x d] for one sequence.
inline Tensor encode(const EncoderConfig& cfg, const EncoderParams& params, const EncoderInput& in,
                     EncodeTrace* trace = nullptr, Rng* dropout_rng = nullptr) {
    const std::size_t len = in.token_ids.size();
    if (len == 0) {
        throw DataError("encode: empty sequence");
    }
    if (in.segment_ids.size() != len || in.attention_mask.size() != len) {
        throw DimensionError("encode: token/segment/mask lengths differ (" + std::to_string(len) + ", " +
                             std::to_string(in.segment_ids.size()) + ", " + std::to_string(in.attention_mask.size()) +
                             ")");
    }
    if (len > cfg.max_positions) {
        throw TruncationError("encode: sequence of " + std::to_string(len) + " tokens exceeds max_positions " +
                              std::to_string(cfg.max_positions));
    }
    for (std::size_t i = 0; i < len; ++i) {
        if (in.token_ids[i] >= cfg.vocab_size) {
            throw VocabularyError("encode: token id " + std::to_string(in.token_ids[i]) + " at position " +
                                  std::to_string(i) + " outside vocabulary of " + std::to_string(cfg.vocab_size));
        }
        if (in.segment_ids[i] >= cfg.num_segments) {
            throw VocabularyError("encode: segment id " + std::to_string(in.segment_ids[i]) + " at position " +
                                  std::to_string(i) + " is not 0 or 1");
        }
    }

    std::vector<std::size_t> positions(len);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    Tensor x = add(add(gather_rows(params.token_embeddings, in.token_ids),
                       gather_rows(params.position_embeddings, positions)),
                   gather_rows(params.segment_embeddings, in.segment_ids));
    x = layer_norm(x, params.emb_ln_gain, params.emb_ln_bias, cfg.layer_norm_eps);
    x = dropout(x, cfg.dropout, dropout_rng);

    std::vector<double> mask_row(len);
    for (std::size_t j = 0; j < len; ++j) {
        mask_row[j] = in.attention_mask[j] ? 0.0 : kMaskedScore;
    }
    const Tensor mask = Tensor::from({len}, std::move(mask_row));
    const std::size_t dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    if (trace != nullptr) {
        trace->attention.clear();
    }
    for (const auto& lp : params.layers) {
        const Tensor q = add_bias(matmul(x, lp.wq), lp.bq);
        const Tensor k = add_bias(matmul(x, lp.wk), lp.bk);
        const Tensor v = add_bias(matmul(x, lp.wv), lp.bv);
        std::vector<Tensor> heads;
        std::vector<Tensor> probs_per_head;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
            const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
            const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
            Tensor scores = add_bias(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), mask);
            Tensor probs = dropout(softmax_last_dim(scores), cfg.dropout, dropout_rng);
            if (trace != nullptr) {
                probs_per_head.push_back(probs);
            }
            heads.push_back(matmul(probs, vh));
        }
        if (trace != nullptr) {
            trace->attention.push_back(std::move(probs_per_head));
        }
        const Tensor merged = heads.size() == 1 ? heads.front() : concat_cols(heads);
        const Tensor attn_out = dropout(add_bias(matmul(merged, lp.wo), lp.bo), cfg.dropout, dropout_rng);
        x = layer_norm(add(x, attn_out), lp.ln_attn_gain, lp.ln_attn_bias, cfg.layer_norm_eps);

        const Tensor ff = add_bias(matmul(gelu(add_bias(matmul(x, lp.ffn_in_w), lp.ffn_in_b)), lp.ffn_out_w),
                                   lp.ffn_out_b);
        x = layer_norm(add(x, dropout(ff, cfg.dropout, dropout_rng)), lp.ln_ffn_gain, lp.ln_ffn_bias,
                       cfg.layer_norm_eps);
    }
    return x;
}

/// Vocabulary logits [|positions| x vocab] at the selected sequence positions.
inline Tensor mlm_logits(const EncoderConfig& cfg, const EncoderParams& params, const Tensor& hidden,
                         const std::vector<std::size_t>& positions) {
    for (auto p : positions) {
        if (p >= hidden.rows()) {
            throw IndexError("mlm_logits: position " + std::to_string(p) + " outside sequence of length " +
                             std::to_string(hidden.rows()));
        }
    }
    const Tensor rows = gather_rows(hidden, positions);
    const Tensor proj = cfg.tie_mlm_weights ? transpose(params.token_embeddings) : params.mlm_weight;
    return add_bias(matmul(rows, proj), params.mlm_bias);
}

}  // namespace hnn
