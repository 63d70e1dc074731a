#pragma once

// Central finite-difference check of the full pair loss against reverse-mode
// gradients, over every scalar entry of every parameter.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/config.hpp"
#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/losses.hpp"
#include "hnn/model.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

struct GradcheckConfig {
    std::uint64_t seed = 0;
    EncoderConfig encoder;
    ModelOptions model;
    LossConfig loss;
    double step = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor for the relative error; keeps entries whose true
    // gradient is ~0 from being judged on round-off alone.
    double floor = 1e-5;

    GradcheckConfig() {
        encoder.d_model = 8;
        encoder.num_layers = 1;
        encoder.num_heads = 1;
        encoder.ffn_multiplier = 4;
        encoder.max_positions = 24;
        // Larger weights than the training default so every path carries signal.
        encoder.init_stddev = 0.3;
        model.head_init_stddev = 0.3;
    }
};

inline void merge_json(const nlohmann::json& j, GradcheckConfig& c) {
    if (!j.is_object()) {
        throw ConfigError("gradcheck configuration must be a JSON object");
    }
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "encoder") merge_json(v, c.encoder);
            else if (key == "model") merge_json(v, c.model);
            else if (key == "loss") merge_json(v, c.loss);
            else if (key == "step") c.step = v.get<double>();
            else if (key == "tolerance") c.tolerance = v.get<double>();
            else if (key == "floor") c.floor = v.get<double>();
            else throw ConfigError("unknown gradcheck field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("gradcheck." + key + ": " + e.what());
        }
    }
    if (!(c.step > 0.0) || !(c.tolerance > 0.0) || !(c.floor >= 0.0)) {
        throw ConfigError("gradcheck: step and tolerance must be positive, floor nonnegative");
    }
}

/// Fixed pair whose positive candidate spans two tokens.
inline Instance gradcheck_instance() {
    Instance inst;
    inst.id = "gradcheck";
    inst.sentence = "The trophy would not fit in the suitcase because it was too big.";
    const std::size_t at = inst.sentence.find(" it ") + 1;
    inst.pronoun = {"it", at, at + 2};
    inst.candidates = {{"the trophy", Label::positive}, {"the suitcase", Label::negative}};
    inst.source = Source::wsc;
    return inst;
}

struct GradcheckEntry {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradcheckReport {
    std::size_t n_checked = 0;
    std::size_t n_failed = 0;
    double max_rel_err = 0.0;
    GradcheckEntry worst;
    std::vector<GradcheckEntry> failures;
    double seconds = 0.0;
    bool passed() const { return n_checked > 0 && n_failed == 0; }
};

inline nlohmann::json to_json(const GradcheckReport& r) {
    auto entry = [](const GradcheckEntry& e) {
        return nlohmann::json{{"parameter", e.parameter}, {"index", e.index}, {"analytic", e.analytic},
                              {"numeric", e.numeric},     {"rel_err", e.rel_err}};
    };
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : r.failures) failures.push_back(entry(f));
    return {{"passed", r.passed()},   {"n_checked", r.n_checked}, {"n_failed", r.n_failed},
            {"max_rel_err", r.max_rel_err}, {"worst", entry(r.worst)}, {"failures", std::move(failures)},
            {"seconds", r.seconds}};
}

inline double relative_error(double analytic, double numeric, double floor) {
    const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
    return den == 0.0 ? 0.0 : std::abs(analytic - numeric) / den;
}

inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Instance inst = gradcheck_instance();
    const std::vector<Instance> corpus{inst};
    const Vocab vocab = corpus_vocab({&corpus});
    EncoderConfig enc = cfg.encoder;
    enc.vocab_size = vocab.size();
    if (enc.dropout != 0.0) {
        throw ConfigError("gradcheck requires dropout 0");
    }
    cfg.loss.validate();
    HnnModel model = HnnModel::create(enc, cfg.model, cfg.seed);
    const auto [pi, ni] = training_pair(inst);

    auto loss = [&] {
        return pair_loss(forward_candidate(model, vocab, inst, pi), forward_candidate(model, vocab, inst, ni), cfg.loss)
            .total;
    };
    NamedTensors params = model.parameters();
    for (auto& [_, p] : params) p.zero_grad();
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (const auto& [_, p] : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    GradcheckReport r;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].second.mutable_data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double orig = w[k];
            w[k] = orig + cfg.step;
            const double up = loss().item();
            w[k] = orig - cfg.step;
            const double down = loss().item();
            w[k] = orig;
            GradcheckEntry e{params[i].first, k, analytic[i][k], (up - down) / (2.0 * cfg.step), 0.0};
            e.rel_err = relative_error(e.analytic, e.numeric, cfg.floor);
            ++r.n_checked;
            if (e.rel_err >= r.max_rel_err) {
                r.max_rel_err = e.rel_err;
                r.worst = e;
            }
            if (!(e.rel_err < cfg.tolerance)) {
                ++r.n_failed;
                r.failures.push_back(e);
            }
        }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace hnn
