#pragma once

// The hybrid model: one shared encoder, a masked-LM head that scores the
// candidate tokens at [MASK] positions replacing the pronoun, and a
// semantic-similarity head that pools the candidate's contextual embeddings
// against [CLS] and matches the result bilinearly with the pronoun embedding.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/encoder.hpp"
#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/tensor.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

struct ModelOptions {
    bool use_mlm = true;
    bool use_ssm = true;
    double mlm_weight = 0.5;  // combined = w * p_mlm + (1 - w) * p_ssm
    bool trailing_sep = true;
    double head_init_stddev = 0.01;

    void validate() const {
        if (!use_mlm && !use_ssm) {
            throw ConfigError("model: at least one of use_mlm / use_ssm must be enabled");
        }
        if (!(mlm_weight > 0.0 && mlm_weight < 1.0)) {
            throw ConfigError("model.mlm_weight must lie in (0, 1)");
        }
        if (!(head_init_stddev > 0.0)) {
            throw ConfigError("model.head_init_stddev must be positive");
        }
    }
};

inline void to_json(nlohmann::json& j, const ModelOptions& o) {
    j = {{"use_mlm", o.use_mlm},
         {"use_ssm", o.use_ssm},
         {"mlm_weight", o.mlm_weight},
         {"trailing_sep", o.trailing_sep},
         {"head_init_stddev", o.head_init_stddev}};
}

inline void merge_json(const nlohmann::json& j, ModelOptions& o) {
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "use_mlm") o.use_mlm = v.get<bool>();
            else if (key == "use_ssm") o.use_ssm = v.get<bool>();
            else if (key == "mlm_weight") o.mlm_weight = v.get<double>();
            else if (key == "trailing_sep") o.trailing_sep = v.get<bool>();
            else if (key == "head_init_stddev") o.head_init_stddev = v.get<double>();
            else throw ConfigError("unknown model field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("model." + key + ": " + e.what());
        }
    }
}

struct HeadParams {
    Tensor w1;  // [d x d], attentive pooling
    Tensor w2;  // [d x d], bilinear matching

    static HeadParams init(std::size_t d, double stddev, Rng& rng) {
        return {init_truncated_normal({d, d}, 0.0, stddev, 2.0, rng),
                init_truncated_normal({d, d}, 0.0, stddev, 2.0, rng)};
    }

    NamedTensors named() const { return {{"ssm.w1", w1}, {"ssm.w2", w2}}; }
};

struct HnnModel {
    EncoderConfig config;
    ModelOptions options;
    EncoderParams encoder;
    HeadParams head;

    static HnnModel create(const EncoderConfig& cfg, const ModelOptions& opts, std::uint64_t seed) {
        cfg.validate();
        opts.validate();
        Rng rng(seed);
        HnnModel m;
        m.config = cfg;
        m.options = opts;
        m.encoder = EncoderParams::init(cfg, rng);
        m.head = HeadParams::init(cfg.d_model, opts.head_init_stddev, rng);
        return m;
    }

    NamedTensors parameters() const {
        auto out = encoder.named();
        auto h = head.named();
        out.insert(out.end(), h.begin(), h.end());
        return out;
    }

    /// Independent copy of every parameter.
    HnnModel clone() const {
        HnnModel m = create_shell();
        auto src = parameters();
        auto dst = m.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) {
            std::copy(src[i].second.data().begin(), src[i].second.data().end(), dst[i].second.mutable_data().begin());
        }
        return m;
    }

private:
    HnnModel create_shell() const { return create(config, options, 0); }
};

// ---------------------------------------------------------------------------
// Packing

struct PackedMlmExample {
    std::vector<std::size_t> token_ids;
    std::vector<std::size_t> segment_ids;
    std::vector<std::size_t> mask_positions;
    std::vector<std::size_t> target_token_ids;
};

struct PackedSsmExample {
    std::vector<std::size_t> token_ids;
    std::vector<std::size_t> segment_ids;
    std::size_t pronoun_first_position = 0;
    std::vector<std::size_t> candidate_positions;
    std::size_t cls_position = 0;
};

namespace detail {

struct SplitSentence {
    std::vector<std::size_t> left, pronoun, right;
};

inline SplitSentence split_at_pronoun(const Vocab& vocab, const Instance& inst) {
    SplitSentence out;
    for (const auto& piece : tokenize(vocab, inst.sentence)) {
        if (piece.span.end <= inst.pronoun.start) {
            out.left.push_back(piece.id);
        } else if (piece.span.begin >= inst.pronoun.end) {
            out.right.push_back(piece.id);
        } else {
            out.pronoun.push_back(piece.id);
        }
    }
    if (out.pronoun.empty()) {
        throw DataError("instance '" + inst.id + "': pronoun span covers no tokens");
    }
    return out;
}

inline std::vector<std::size_t> candidate_ids(const Vocab& vocab, const Instance& inst, std::size_t candidate) {
    if (candidate >= inst.candidates.size()) {
        throw IndexError("instance '" + inst.id + "': candidate " + std::to_string(candidate) + " out of range");
    }
    std::vector<std::size_t> ids;
    for (const auto& piece : tokenize(vocab, inst.candidates[candidate].text)) {
        ids.push_back(piece.id);
    }
    if (ids.empty()) {
        throw DataError("instance '" + inst.id + "': candidate '" + inst.candidates[candidate].text +
                        "' tokenizes to nothing");
    }
    return ids;
}

// Start of a length-`budget` window over `len` tokens that keeps [keep_begin, keep_end).
inline std::size_t window_start(std::size_t len, std::size_t budget, std::size_t keep_begin, std::size_t keep_end) {
    if (len <= budget) {
        return 0;
    }
    const std::size_t keep = keep_end - keep_begin;
    const std::size_t slack = (budget - keep) / 2;
    std::size_t start = keep_begin > slack ? keep_begin - slack : 0;
    return std::min(start, len - budget);
}

}  // namespace detail

/// [CLS] left [MASK]*N right [SEP], all segment 0. Long sentences are cut to a
/// window around the masks.
inline PackedMlmExample pack_mlm(const Vocab& vocab, const Instance& inst, std::size_t candidate,
                                 std::size_t max_positions) {
    const auto split = detail::split_at_pronoun(vocab, inst);
    const auto targets = detail::candidate_ids(vocab, inst, candidate);
    std::vector<std::size_t> body = split.left;
    const std::size_t mask_begin = body.size();
    body.insert(body.end(), targets.size(), Vocab::kMask);
    body.insert(body.end(), split.right.begin(), split.right.end());
    if (max_positions < 2 || targets.size() > max_positions - 2) {
        throw TruncationError("instance '" + inst.id + "': candidate does not fit in " + std::to_string(max_positions) +
                              " positions");
    }
    const std::size_t budget = max_positions - 2;
    const std::size_t start = detail::window_start(body.size(), budget, mask_begin, mask_begin + targets.size());
    const std::size_t stop = std::min(body.size(), start + budget);

    PackedMlmExample ex;
    ex.token_ids.push_back(Vocab::kCls);
    ex.token_ids.insert(ex.token_ids.end(), body.begin() + static_cast<std::ptrdiff_t>(start),
                        body.begin() + static_cast<std::ptrdiff_t>(stop));
    ex.token_ids.push_back(Vocab::kSep);
    ex.segment_ids.assign(ex.token_ids.size(), 0);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        ex.mask_positions.push_back(1 + mask_begin - start + k);
    }
    ex.target_token_ids = targets;
    return ex;
}

/// [CLS] S [SEP] C [SEP]; segment 0 through the first [SEP], 1 afterwards.
inline PackedSsmExample pack_ssm(const Vocab& vocab, const Instance& inst, std::size_t candidate,
                                 std::size_t max_positions, bool trailing_sep = true) {
    const auto split = detail::split_at_pronoun(vocab, inst);
    const auto cand = detail::candidate_ids(vocab, inst, candidate);
    std::vector<std::size_t> body = split.left;
    const std::size_t pron = body.size();
    body.insert(body.end(), split.pronoun.begin(), split.pronoun.end());
    body.insert(body.end(), split.right.begin(), split.right.end());
    const std::size_t fixed = 2 + cand.size() + (trailing_sep ? 1 : 0);
    if (fixed >= max_positions) {
        throw TruncationError("instance '" + inst.id + "': candidate does not fit in " + std::to_string(max_positions) +
                              " positions");
    }
    const std::size_t budget = max_positions - fixed;
    const std::size_t start = detail::window_start(body.size(), budget, pron, pron + 1);
    const std::size_t stop = std::min(body.size(), start + budget);

    PackedSsmExample ex;
    ex.token_ids.push_back(Vocab::kCls);
    ex.token_ids.insert(ex.token_ids.end(), body.begin() + static_cast<std::ptrdiff_t>(start),
                        body.begin() + static_cast<std::ptrdiff_t>(stop));
    ex.token_ids.push_back(Vocab::kSep);
    ex.segment_ids.assign(ex.token_ids.size(), 0);
    ex.pronoun_first_position = 1 + pron - start;
    for (std::size_t id : cand) {
        ex.candidate_positions.push_back(ex.token_ids.size());
        ex.token_ids.push_back(id);
    }
    if (trailing_sep) {
        ex.token_ids.push_back(Vocab::kSep);
    }
    ex.segment_ids.resize(ex.token_ids.size(), 1);
    ex.cls_position = 0;
    return ex;
}

// ---------------------------------------------------------------------------
// Heads

struct MlmOutput {
    Tensor mean_log;  // (1/N) sum_k log P(c_k | S), scalar
    Tensor prob;      // exp(mean_log), scalar
};

/// Geometric mean of the target-token probabilities at the mask positions,
/// every token conditioned on the fully masked sentence. For N = 1 the
/// probability is read straight off the softmax.
inline MlmOutput mlm_forward(const HnnModel& model, const PackedMlmExample& ex, Rng* dropout_rng = nullptr) {
    if (ex.mask_positions.empty() || ex.mask_positions.size() != ex.target_token_ids.size()) {
        throw DataError("masked-LM example needs N >= 1 masks and N targets");
    }
    const Tensor hidden = encode(model.config, model.encoder, EncoderInput::unpadded(ex.token_ids, ex.segment_ids),
                                 nullptr, dropout_rng);
    const Tensor logits = mlm_logits(model.config, model.encoder, hidden, ex.mask_positions);
    MlmOutput out;
    if (ex.mask_positions.size() == 1) {
        out.prob = pick(softmax_last_dim(logits), ex.target_token_ids);
        out.mean_log = log(out.prob);
    } else {
        out.mean_log = mean(pick(log_softmax_last_dim(logits), ex.target_token_ids));
        out.prob = exp(out.mean_log);
    }
    return out;
}

inline double score_mlm(const HnnModel& model, const PackedMlmExample& ex) {
    return mlm_forward(model, ex).prob.item();
}

struct PooledCandidate {
    Tensor c;       // [d]
    Tensor alphas;  // [N]
};

/// alpha = softmax_k(s^T W1 h_k / sqrt(d)) with s the [CLS] embedding; c = sum_k alpha_k h_k.
inline PooledCandidate pool_candidate(const Tensor& hidden, const Tensor& w1, std::size_t cls_position,
                                      const std::vector<std::size_t>& candidate_positions) {
    if (candidate_positions.empty()) {
        throw DataError("pool_candidate: candidate span is empty");
    }
    const std::size_t d = hidden.cols();
    const Tensor s = gather_rows(hidden, {cls_position});
    const Tensor h = gather_rows(hidden, candidate_positions);
    const Tensor scores = scale(matmul(matmul(s, w1), transpose(h)), 1.0 / std::sqrt(static_cast<double>(d)));
    const Tensor alphas = softmax_last_dim(scores);
    const Tensor c = matmul(alphas, h);
    return {reshape(c, {d}), reshape(alphas, {candidate_positions.size()})};
}

/// Bilinear similarity p^T W2 c (a scalar tensor), before the logistic.
inline Tensor ssm_logit(const HnnModel& model, const PackedSsmExample& ex, Rng* dropout_rng = nullptr) {
    const std::size_t len = ex.token_ids.size();
    if (ex.pronoun_first_position >= len || ex.cls_position >= len) {
        throw IndexError("similarity example positions out of range");
    }
    for (auto p : ex.candidate_positions) {
        if (p >= len) {
            throw IndexError("similarity example candidate position out of range");
        }
    }
    const Tensor hidden = encode(model.config, model.encoder, EncoderInput::unpadded(ex.token_ids, ex.segment_ids),
                                 nullptr, dropout_rng);
    const auto pooled = pool_candidate(hidden, model.head.w1, ex.cls_position, ex.candidate_positions);
    const std::size_t d = hidden.cols();
    const Tensor p = gather_rows(hidden, {ex.pronoun_first_position});
    return reshape(matmul(matmul(p, model.head.w2), reshape(pooled.c, {d, 1})), {1});
}

inline double score_ssm(const HnnModel& model, const PackedSsmExample& ex) {
    return sigmoid(ssm_logit(model, ex).item());
}

struct ScorePair {
    std::optional<double> p_mlm;
    std::optional<double> p_ssm;
    double combined = 0.0;
};

inline ScorePair score_combined(double p_mlm, double p_ssm, double mlm_weight = 0.5) {
    auto in_range = [](double p) { return p > 0.0 && p <= 1.0; };
    if (!in_range(p_mlm) || !in_range(p_ssm)) {
        throw ContractViolation("score_combined: inputs must lie in (0, 1], got " + std::to_string(p_mlm) + ", " +
                                std::to_string(p_ssm));
    }
    return {p_mlm, p_ssm, mlm_weight * p_mlm + (1.0 - mlm_weight) * p_ssm};
}

/// Differentiable per-candidate outputs. Disabled heads are left undefined.
struct CandidateForward {
    Tensor mlm_log;    // mean log-probability
    Tensor p_mlm;      // exp(mlm_log)
    Tensor ssm_logit;  // Sim(C, S)
    Tensor p_ssm;      // sigmoid(ssm_logit)
    Tensor combined;
};

inline CandidateForward forward_candidate(const HnnModel& model, const Vocab& vocab, const Instance& inst,
                                          std::size_t candidate, Rng* dropout_rng = nullptr) {
    CandidateForward f;
    if (model.options.use_mlm) {
        auto out = mlm_forward(model, pack_mlm(vocab, inst, candidate, model.config.max_positions), dropout_rng);
        f.mlm_log = out.mean_log;
        f.p_mlm = out.prob;
    }
    if (model.options.use_ssm) {
        f.ssm_logit = ssm_logit(
            model, pack_ssm(vocab, inst, candidate, model.config.max_positions, model.options.trailing_sep), dropout_rng);
        f.p_ssm = sigmoid(f.ssm_logit);
    }
    if (f.p_mlm.defined() && f.p_ssm.defined()) {
        const double w = model.options.mlm_weight;
        f.combined = add(scale(f.p_mlm, w), scale(f.p_ssm, 1.0 - w));
    } else {
        f.combined = f.p_mlm.defined() ? f.p_mlm : f.p_ssm;
    }
    return f;
}

/// Both heads over the shared encoder for one candidate. With a head disabled
/// the combined score is the remaining head's probability.
inline ScorePair score_instance(const HnnModel& model, const Vocab& vocab, const Instance& inst, std::size_t candidate) {
    const auto f = forward_candidate(model, vocab, inst, candidate);
    ScorePair out;
    if (f.p_mlm.defined()) out.p_mlm = f.p_mlm.item();
    if (f.p_ssm.defined()) out.p_ssm = f.p_ssm.item();
    out.combined = f.combined.item();
    return out;
}

}  // namespace hnn
