#pragma once

// Adam with linear warmup/decay, epoch-level model selection, stochastic
// weight averaging, and per-epoch prediction history for majority voting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/checkpoint.hpp"
#include "hnn/errors.hpp"
#include "hnn/evaluation.hpp"
#include "hnn/instance.hpp"
#include "hnn/losses.hpp"
#include "hnn/model.hpp"
#include "hnn/tensor.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t warmup_steps = 100;
    std::size_t max_epochs = 10;
    std::size_t select_first = 8;  // selection window, 1-based inclusive
    std::size_t select_last = 10;
    std::uint64_t seed = 0;  // set from the run seed
    bool swa_enabled = true;
    bool eval_train = true;     // record train ranking accuracy each epoch
    bool freeze_encoder = false;  // update only the similarity head
    AdamConfig adam;
    LossConfig loss;

    void validate() const {
        if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
        if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("train.learning_rate must be positive");
        }
        if (select_first == 0 || select_first > select_last) {
            throw ConfigError("train.select_epochs must be a nonempty 1-based range");
        }
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
            !(adam.eps > 0.0)) {
            throw ConfigError("train.adam: betas must lie in [0, 1) and eps must be positive");
        }
        loss.validate();
    }

    std::size_t steps_per_epoch(std::size_t n_train) const { return (n_train + batch_size - 1) / batch_size; }
    std::size_t total_steps(std::size_t n_train) const { return steps_per_epoch(n_train) * max_epochs; }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"warmup_steps", c.warmup_steps},
         {"max_epochs", c.max_epochs},
         {"select_epochs", {c.select_first, c.select_last}},
         {"swa_enabled", c.swa_enabled},
         {"eval_train", c.eval_train},
         {"freeze_encoder", c.freeze_encoder},
         {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
         {"loss", c.loss}};
}

inline void merge_json(const nlohmann::json& j, TrainConfig& c) {
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
            else if (key == "max_epochs") c.max_epochs = v.get<std::size_t>();
            else if (key == "select_epochs") {
                const auto r = v.get<std::vector<std::size_t>>();
                if (r.size() != 2) throw ConfigError("train.select_epochs must be [first, last]");
                c.select_first = r[0];
                c.select_last = r[1];
            }
            else if (key == "swa_enabled") c.swa_enabled = v.get<bool>();
            else if (key == "eval_train") c.eval_train = v.get<bool>();
            else if (key == "freeze_encoder") c.freeze_encoder = v.get<bool>();
            else if (key == "adam") {
                for (const auto& [k, x] : v.items()) {
                    if (k == "beta1") c.adam.beta1 = x.get<double>();
                    else if (k == "beta2") c.adam.beta2 = x.get<double>();
                    else if (k == "eps") c.adam.eps = x.get<double>();
                    else throw ConfigError("unknown train.adam field '" + k + "'");
                }
            }
            else if (key == "loss") merge_json(v, c.loss);
            else throw ConfigError("unknown train field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train." + key + ": " + e.what());
        }
    }
}

/// Linear ramp 0 -> peak over `warmup` steps, then linear decay to 0 at `total`.
inline double lr_at(std::size_t step, std::size_t warmup, std::size_t total, double peak) {
    if (step >= total) {
        return 0.0;
    }
    if (step < warmup) {
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

struct AdamState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Parameters listed in `frozen` (by index) are skipped.
inline void adam_step(NamedTensors& params, AdamState& state, double lr, const AdamConfig& cfg = {},
                      const std::vector<bool>& frozen = {}) {
    if (state.m.empty()) {
        for (const auto& [_, p] : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                             " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = params[i].second.grad();
        for (double x : g) {
            if (std::isnan(x)) {
                throw TrainingHalt("NaN gradient in parameter '" + params[i].first + "'");
            }
        }
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!frozen.empty() && frozen[i]) {
            continue;
        }
        Tensor& p = params[i].second;
        const auto& g = p.grad();
        if (g.size() != state.m[i].size()) {
            throw DimensionError("adam_step: gradient of '" + params[i].first + "' does not match its state");
        }
        auto w = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
        }
    }
}

/// Running arithmetic mean of parameter snapshots.
class SwaAccumulator {
public:
    void add(const NamedTensors& params) {
        if (count_ == 0) {
            mean_.clear();
            for (const auto& [_, p] : params) {
                mean_.emplace_back(p.data().begin(), p.data().end());
            }
            count_ = 1;
            return;
        }
        if (params.size() != mean_.size()) {
            throw DimensionError("SwaAccumulator: snapshot has a different parameter count");
        }
        ++count_;
        const double k = static_cast<double>(count_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& x = params[i].second.data();
            if (x.size() != mean_[i].size()) {
                throw DimensionError("SwaAccumulator: snapshot shape mismatch for '" + params[i].first + "'");
            }
            for (std::size_t j = 0; j < x.size(); ++j) {
                mean_[i][j] += (x[j] - mean_[i][j]) / k;
            }
        }
    }

    std::size_t count() const { return count_; }
    const std::vector<std::vector<double>>& mean() const { return mean_; }

    /// Writes the mean into `params` (same layout as the snapshots).
    void assign_to(NamedTensors& params) const {
        if (count_ == 0 || params.size() != mean_.size()) {
            throw ContractViolation("SwaAccumulator: no snapshots to assign");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::copy(mean_[i].begin(), mean_[i].end(), params[i].second.mutable_data().begin());
        }
    }

private:
    std::vector<std::vector<double>> mean_;
    std::size_t count_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> train_accuracy;
    double dev_accuracy = 0.0;
    double learning_rate = 0.0;  // rate of the epoch's last update
    std::size_t step = 0;
    std::vector<InstancePrediction> dev_predictions;
};

inline nlohmann::json metrics_json(const EpochRecord& r) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"train_loss", r.train_loss},
                        {"dev_acc", r.dev_accuracy},
                        {"lr", r.learning_rate},
                        {"step", r.step}};
    j["train_acc"] = r.train_accuracy ? nlohmann::json(*r.train_accuracy) : nlohmann::json(nullptr);
    return j;
}

struct TrainState {
    std::size_t step = 0;
    AdamState adam;
    SwaAccumulator swa;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_dev_accuracy = -1.0;

    std::vector<std::vector<InstancePrediction>> epoch_predictions() const {
        std::vector<std::vector<InstancePrediction>> out;
        for (const auto& r : history) out.push_back(r.dev_predictions);
        return out;
    }
};

/// Batch-mean loss components of one optimizer step.
struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double l_mlm = 0.0;
    double l_ssm = 0.0;
    double l_rank = 0.0;
    double total = 0.0;
};

inline nlohmann::json to_json(const StepRecord& r) {
    return {{"step", r.step}, {"lr", r.lr}, {"l_mlm", r.l_mlm}, {"l_ssm", r.l_ssm}, {"l_rank", r.l_rank}, {"total", r.total}};
}

struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const EpochRecord&, const HnnModel&)> on_epoch;
};

struct TrainResult {
    HnnModel selected;
    std::optional<HnnModel> swa;
    TrainState state;
    std::vector<std::string> warnings;
};

/// Selection window clipped to the epochs actually run.
inline std::pair<std::size_t, std::size_t> clip_window(std::size_t first, std::size_t last, std::size_t epochs) {
    const std::size_t hi = std::min(last, epochs);
    const std::size_t lo = std::min(first, hi);
    return {lo, hi};
}

namespace detail {

inline std::vector<InstancePrediction> predict(const HnnModel& model, const Vocab& vocab,
                                               const std::vector<Instance>& instances) {
    return rank_predictions(instances, score_corpus(model, vocab, instances));
}

inline void copy_parameters(const HnnModel& src, HnnModel& dst) {
    auto s = src.parameters();
    auto d = dst.parameters();
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::copy(s[i].second.data().begin(), s[i].second.data().end(), d[i].second.mutable_data().begin());
    }
}

}  // namespace detail

/// Fine-tunes `model` on (C+, C-) pairs. Returns the dev-selected parameters
/// and, when enabled, the SWA average over the selection window onward.
inline TrainResult train(const HnnModel& initial, const Vocab& vocab, const std::vector<Instance>& train_set,
                         const std::vector<Instance>& dev_set, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    HnnModel model = initial.clone();
    if (cfg.loss.enable_mlm && !model.options.use_mlm) {
        throw ConfigError("masked-LM loss enabled but the masked-LM head is disabled");
    }
    if (cfg.loss.enable_ssm && !model.options.use_ssm) {
        throw ConfigError("similarity loss enabled but the similarity head is disabled");
    }
    if (train_set.empty()) {
        throw ConfigError("training corpus is empty");
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(train_set.size());
    for (const auto& inst : train_set) {
        pairs.push_back(training_pair(inst));
    }
    const std::size_t total = cfg.total_steps(train_set.size());
    if (cfg.warmup_steps >= total) {
        throw ConfigError("train.warmup_steps (" + std::to_string(cfg.warmup_steps) + ") must be below the total step count (" +
                          std::to_string(total) + ")");
    }

    TrainResult result{model.clone(), std::nullopt, {}, {}};
    const auto [win_lo, win_hi] = clip_window(cfg.select_first, cfg.select_last, cfg.max_epochs);
    if (win_lo != cfg.select_first || win_hi != cfg.select_last) {
        result.warnings.push_back("selection window [" + std::to_string(cfg.select_first) + ", " +
                                  std::to_string(cfg.select_last) + "] clipped to [" + std::to_string(win_lo) + ", " +
                                  std::to_string(win_hi) + "]");
    }
    if (dev_set.empty()) {
        result.warnings.push_back("empty dev set; epoch selection falls back to the earliest window epoch");
    }

    NamedTensors params = model.parameters();
    std::vector<bool> frozen(params.size(), false);
    if (cfg.freeze_encoder) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            frozen[i] = params[i].first.rfind("ssm.", 0) != 0;
        }
    }
    TrainState& st = result.state;
    Rng shuffle_rng(cfg.seed);
    Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng* drop = model.config.dropout > 0.0 ? &dropout_rng : nullptr;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(e - b);
            for (auto& [_, p] : params) p.zero_grad();
            StepRecord srec;
            for (std::size_t k = b; k < e; ++k) {
                const Instance& inst = train_set[order[k]];
                const auto [pi, ni] = pairs[order[k]];
                const auto fp = forward_candidate(model, vocab, inst, pi, drop);
                const auto fn = forward_candidate(model, vocab, inst, ni, drop);
                const auto pl = pair_loss(fp, fn, cfg.loss);
                if (!std::isfinite(pl.breakdown.total)) {
                    throw TrainingHalt("non-finite loss on instance '" + inst.id + "' at step " +
                                       std::to_string(st.step + 1));
                }
                backward(scale(pl.total, inv));
                srec.l_mlm += pl.breakdown.l_mlm * inv;
                srec.l_ssm += pl.breakdown.l_ssm * inv;
                srec.l_rank += pl.breakdown.l_rank * inv;
                srec.total += pl.breakdown.total * inv;
                loss_sum += pl.breakdown.total;
            }
            ++st.step;
            lr = lr_at(st.step, cfg.warmup_steps, total, cfg.learning_rate);
            adam_step(params, st.adam, lr, cfg.adam, frozen);
            srec.step = st.step;
            srec.lr = lr;
            if (hooks.on_step) hooks.on_step(srec);
        }
        for (auto& [_, p] : params) p.zero_grad();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.step = st.step;
        rec.learning_rate = lr;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        if (cfg.eval_train) {
            rec.train_accuracy = ranking_accuracy(detail::predict(model, vocab, train_set));
        }
        rec.dev_predictions = detail::predict(model, vocab, dev_set);
        rec.dev_accuracy = ranking_accuracy(rec.dev_predictions);

        if (epoch >= win_lo && epoch <= win_hi && rec.dev_accuracy > st.best_dev_accuracy) {
            st.best_dev_accuracy = rec.dev_accuracy;
            st.best_epoch = epoch;
            detail::copy_parameters(model, result.selected);
        }
        if (cfg.swa_enabled && epoch >= win_lo) {
            st.swa.add(params);
        }
        if (hooks.on_epoch) hooks.on_epoch(rec, model);
        st.history.push_back(std::move(rec));
    }
    if (cfg.swa_enabled && st.swa.count() > 0) {
        HnnModel avg = model.clone();
        auto dst = avg.parameters();
        st.swa.assign_to(dst);
        result.swa = std::move(avg);
    }
    return result;
}

/// Per instance, the candidate chosen by most of the last `window` epochs;
/// ties go to the higher mean score over the window, then the lowest index.
inline std::vector<InstancePrediction> ensemble_vote(const std::vector<std::vector<InstancePrediction>>& history,
                                                     std::size_t window = 6) {
    if (history.empty()) {
        throw DataError("ensemble_vote: no recorded epochs");
    }
    if (window == 0) {
        throw ConfigError("ensemble_vote: window must be >= 1");
    }
    const std::size_t w = std::min(window, history.size());
    const std::size_t first = history.size() - w;
    const auto& last = history.back();

    std::vector<std::map<std::string, const InstancePrediction*>> by_id(w);
    for (std::size_t e = 0; e < w; ++e) {
        const auto& epoch = history[first + e];
        if (epoch.size() != last.size()) {
            throw DataError("ensemble_vote: epochs record different instance sets");
        }
        for (const auto& p : epoch) {
            if (!by_id[e].emplace(p.id, &p).second) {
                throw DataError("ensemble_vote: duplicate instance id '" + p.id + "'");
            }
        }
    }

    std::vector<InstancePrediction> out;
    out.reserve(last.size());
    for (const auto& anchor : last) {
        const std::size_t n = anchor.scores.size();
        std::vector<std::size_t> votes(n, 0);
        std::vector<double> score_sum(n, 0.0);
        for (std::size_t e = 0; e < w; ++e) {
            auto it = by_id[e].find(anchor.id);
            if (it == by_id[e].end()) {
                throw DataError("ensemble_vote: instance '" + anchor.id + "' missing from an epoch");
            }
            const auto& p = *it->second;
            if (p.scores.size() != n || p.predicted >= n) {
                throw DataError("ensemble_vote: candidate count of '" + anchor.id + "' changes across epochs");
            }
            ++votes[p.predicted];
            for (std::size_t c = 0; c < n; ++c) score_sum[c] += p.scores[c];
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < n; ++c) {
            if (votes[c] > votes[best] || (votes[c] == votes[best] && score_sum[c] > score_sum[best])) {
                best = c;
            }
        }
        InstancePrediction r{anchor.id, best, {}, anchor.gold};
        for (double s : score_sum) r.scores.push_back(s / static_cast<double>(w));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace hnn
