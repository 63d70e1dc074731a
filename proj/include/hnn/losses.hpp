#pragma once

// Training objective: masked-LM negative log-likelihood on the positive
// candidate, similarity cross-entropy on both candidates, and a smoothed
// pairwise rank loss on the combined scores.

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/model.hpp"
#include "hnn/tensor.hpp"

namespace hnn {

/// plus: log(1 + exp(-gamma (delta + beta)));  minus: log(1 + exp(-gamma (delta - beta))).
enum class MarginSign { plus, minus };

struct LossConfig {
    double gamma = 10.0;
    double beta = 0.6;
    double beta_mlm = 0.6;
    double beta_ssm = 0.5;
    MarginSign margin_sign = MarginSign::plus;
    bool enable_mlm = true;
    bool enable_ssm = true;
    bool enable_rank = true;
    // Extra rank terms on each head's own probabilities, margins beta_mlm / beta_ssm.
    bool per_head_rank = false;
    // Also penalize the negative candidate's masked-LM likelihood: -log(1 - p_mlm^-).
    bool symmetric_mlm = false;

    void validate() const {
        if (!(gamma >= 1.0 && gamma <= 10.0)) {
            throw ConfigError("loss.gamma must lie in [1, 10]");
        }
        for (auto [v, name] : {std::pair{beta, "beta"}, {beta_mlm, "beta_mlm"}, {beta_ssm, "beta_ssm"}}) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConfigError(std::string("loss.") + name + " must lie in [0, 1]");
            }
        }
        if (!enable_mlm && !enable_ssm && !enable_rank) {
            throw ConfigError("loss: all three loss terms are disabled");
        }
    }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
    j = {{"gamma", c.gamma},
         {"beta", c.beta},
         {"beta_mlm", c.beta_mlm},
         {"beta_ssm", c.beta_ssm},
         {"margin_sign", c.margin_sign == MarginSign::plus ? "plus" : "minus"},
         {"enable_mlm", c.enable_mlm},
         {"enable_ssm", c.enable_ssm},
         {"enable_rank", c.enable_rank},
         {"per_head_rank", c.per_head_rank},
         {"symmetric_mlm", c.symmetric_mlm}};
}

inline void merge_json(const nlohmann::json& j, LossConfig& c) {
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "gamma") c.gamma = v.get<double>();
            else if (key == "beta") c.beta = v.get<double>();
            else if (key == "beta_mlm") c.beta_mlm = v.get<double>();
            else if (key == "beta_ssm") c.beta_ssm = v.get<double>();
            else if (key == "margin_sign") {
                const auto s = v.get<std::string>();
                if (s == "plus") c.margin_sign = MarginSign::plus;
                else if (s == "minus") c.margin_sign = MarginSign::minus;
                else throw ConfigError("loss.margin_sign must be 'plus' or 'minus'");
            }
            else if (key == "enable_mlm") c.enable_mlm = v.get<bool>();
            else if (key == "enable_ssm") c.enable_ssm = v.get<bool>();
            else if (key == "enable_rank") c.enable_rank = v.get<bool>();
            else if (key == "per_head_rank") c.per_head_rank = v.get<bool>();
            else if (key == "symmetric_mlm") c.symmetric_mlm = v.get<bool>();
            else throw ConfigError("unknown loss field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("loss." + key + ": " + e.what());
        }
    }
}

struct PairLossBreakdown {
    double l_mlm = 0.0;
    double l_ssm = 0.0;
    double l_rank = 0.0;
    double total = 0.0;
    double delta = 0.0;
};

inline double loss_mlm(double p_mlm_positive) {
    if (!(p_mlm_positive > 0.0 && p_mlm_positive <= 1.0)) {
        throw DomainError("loss_mlm: probability must lie in (0, 1], got " + std::to_string(p_mlm_positive));
    }
    return -std::log(p_mlm_positive);
}

inline double loss_ssm(double p_positive, double p_negative) {
    auto open = [](double p) { return p > 0.0 && p < 1.0; };
    if (!open(p_positive) || !open(p_negative)) {
        throw DomainError("loss_ssm: probabilities must lie in (0, 1), got " + std::to_string(p_positive) + ", " +
                          std::to_string(p_negative));
    }
    return -std::log(p_positive) - std::log1p(-p_negative);
}

inline double rank_exponent_shift(double beta, MarginSign sign) { return sign == MarginSign::plus ? beta : -beta; }

/// log(1 + exp(-gamma (delta +/- beta))) for a given score difference.
inline double rank_loss_at(double delta, double gamma, double beta, MarginSign sign = MarginSign::plus) {
    return softplus(-gamma * (delta + rank_exponent_shift(beta, sign)));
}

struct RankLoss {
    double loss = 0.0;
    double delta = 0.0;
};

inline RankLoss loss_rank(double score_positive, double score_negative, const LossConfig& cfg) {
    const double delta = score_positive - score_negative;
    return {rank_loss_at(delta, cfg.gamma, cfg.beta, cfg.margin_sign), delta};
}

/// Positive and negative candidate indices of a training instance.
inline std::pair<std::size_t, std::size_t> training_pair(const Instance& inst) {
    std::optional<std::size_t> pos, neg;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < inst.candidates.size(); ++i) {
        if (inst.candidates[i].label == Label::positive) {
            ++n_pos;
            pos = i;
        } else if (inst.candidates[i].label == Label::negative) {
            ++n_neg;
            neg = i;
        }
    }
    if (n_pos != 1 || n_neg != 1 || inst.candidates.size() != 2) {
        throw DataError("instance '" + inst.id + "': training pairs need exactly one positive and one negative candidate (got " +
                        std::to_string(n_pos) + " positive, " + std::to_string(n_neg) + " negative)");
    }
    return {*pos, *neg};
}

/// Sum of the enabled loss terms for one (C+, C-) pair, from scalar scores.
inline PairLossBreakdown loss_total(const ScorePair& positive, const ScorePair& negative, const LossConfig& cfg) {
    PairLossBreakdown b;
    b.delta = positive.combined - negative.combined;
    if (cfg.enable_mlm) {
        if (!positive.p_mlm) {
            throw ConfigError("loss_total: masked-LM loss enabled without masked-LM scores");
        }
        b.l_mlm = loss_mlm(*positive.p_mlm);
        if (cfg.symmetric_mlm) {
            b.l_mlm += -std::log1p(-*negative.p_mlm);
        }
    }
    if (cfg.enable_ssm) {
        if (!positive.p_ssm || !negative.p_ssm) {
            throw ConfigError("loss_total: similarity loss enabled without similarity scores");
        }
        b.l_ssm = loss_ssm(*positive.p_ssm, *negative.p_ssm);
    }
    if (cfg.enable_rank) {
        b.l_rank = loss_rank(positive.combined, negative.combined, cfg).loss;
        if (cfg.per_head_rank) {
            if (positive.p_mlm && negative.p_mlm) {
                b.l_rank += rank_loss_at(*positive.p_mlm - *negative.p_mlm, cfg.gamma, cfg.beta_mlm, cfg.margin_sign);
            }
            if (positive.p_ssm && negative.p_ssm) {
                b.l_rank += rank_loss_at(*positive.p_ssm - *negative.p_ssm, cfg.gamma, cfg.beta_ssm, cfg.margin_sign);
            }
        }
    }
    b.total = b.l_mlm + b.l_ssm + b.l_rank;
    return b;
}

struct PairLoss {
    Tensor total;  // differentiable scalar
    PairLossBreakdown breakdown;
};

namespace detail {

inline Tensor rank_term(const Tensor& pos, const Tensor& neg, double gamma, double beta, MarginSign sign) {
    // softplus(-gamma * (delta + shift))
    return softplus(add_scalar(scale(sub(pos, neg), -gamma), -gamma * rank_exponent_shift(beta, sign)));
}

}  // namespace detail

/// Differentiable counterpart of loss_total over the heads' forward outputs.
/// Cross-entropy terms are taken from logits / log-probabilities directly.
inline PairLoss pair_loss(const CandidateForward& positive, const CandidateForward& negative, const LossConfig& cfg) {
    std::vector<Tensor> terms;
    PairLoss out;
    out.breakdown.delta = positive.combined.item() - negative.combined.item();
    if (cfg.enable_mlm) {
        if (!positive.mlm_log.defined()) {
            throw ConfigError("pair_loss: masked-LM loss enabled but the masked-LM head is disabled");
        }
        Tensor l = neg(positive.mlm_log);
        if (cfg.symmetric_mlm) {
            l = add(l, neg(log(add_scalar(neg(negative.p_mlm), 1.0))));
        }
        out.breakdown.l_mlm = l.item();
        terms.push_back(l);
    }
    if (cfg.enable_ssm) {
        if (!positive.ssm_logit.defined()) {
            throw ConfigError("pair_loss: similarity loss enabled but the similarity head is disabled");
        }
        // -log sigmoid(s+) = softplus(-s+);  -log(1 - sigmoid(s-)) = softplus(s-)
        Tensor l = add(softplus(neg(positive.ssm_logit)), softplus(negative.ssm_logit));
        out.breakdown.l_ssm = l.item();
        terms.push_back(l);
    }
    if (cfg.enable_rank) {
        Tensor l = detail::rank_term(positive.combined, negative.combined, cfg.gamma, cfg.beta, cfg.margin_sign);
        if (cfg.per_head_rank) {
            if (positive.p_mlm.defined()) {
                l = add(l, detail::rank_term(positive.p_mlm, negative.p_mlm, cfg.gamma, cfg.beta_mlm, cfg.margin_sign));
            }
            if (positive.p_ssm.defined()) {
                l = add(l, detail::rank_term(positive.p_ssm, negative.p_ssm, cfg.gamma, cfg.beta_ssm, cfg.margin_sign));
            }
        }
        out.breakdown.l_rank = l.item();
        terms.push_back(l);
    }
    if (terms.empty()) {
        throw ConfigError("pair_loss: all loss terms are disabled");
    }
    out.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        out.total = add(out.total, terms[i]);
    }
    out.breakdown.total = out.total.item();
    return out;
}

}  // namespace hnn
