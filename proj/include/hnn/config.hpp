#pragma once

// Run configuration: one JSON document holding the seed and the encoder,
// model, and training (including loss) settings. Fields absent from the
// document keep their built-in defaults; unknown fields are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/encoder.hpp"
#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/model.hpp"
#include "hnn/training.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

struct RunConfig {
    std::uint64_t seed = 0;
    EncoderConfig encoder;
    ModelOptions model;
    TrainConfig train;

    /// Validates everything except the vocabulary size, which is filled in
    /// once a vocabulary exists.
    void validate() const {
        EncoderConfig e = encoder;
        if (e.vocab_size == 0) e.vocab_size = Vocab::kNumSpecial;
        e.validate();
        model.validate();
        train.validate();
        if (train.loss.enable_mlm && !model.use_mlm) {
            throw ConfigError("train.loss.enable_mlm requires model.use_mlm");
        }
        if (train.loss.enable_ssm && !model.use_ssm) {
            throw ConfigError("train.loss.enable_ssm requires model.use_ssm");
        }
    }

    TrainConfig resolved_train() const {
        TrainConfig t = train;
        t.seed = seed;
        return t;
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"seed", c.seed}, {"encoder", c.encoder}, {"model", c.model}, {"train", c.train}};
}

inline void merge_json(const nlohmann::json& j, RunConfig& c) {
    if (!j.is_object()) {
        throw ConfigError("configuration must be a JSON object");
    }
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "encoder") merge_json(v, c.encoder);
            else if (key == "model") merge_json(v, c.model);
            else if (key == "train") merge_json(v, c.train);
            else throw ConfigError("unknown configuration field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open configuration " + path.string());
    }
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig c;
    merge_json(read_json_file(path), c);
    return c;
}

/// Whole-word vocabulary over every sentence and candidate of the corpora.
inline Vocab corpus_vocab(const std::vector<const std::vector<Instance>*>& corpora) {
    std::vector<std::string> texts;
    for (const auto* corpus : corpora) {
        for (const auto& inst : *corpus) {
            texts.push_back(inst.sentence);
            for (const auto& c : inst.candidates) texts.push_back(c.text);
        }
    }
    return Vocab::build(texts);
}

inline HnnModel make_model(const RunConfig& cfg, const Vocab& vocab) {
    EncoderConfig e = cfg.encoder;
    e.vocab_size = vocab.size();
    return HnnModel::create(e, cfg.model, cfg.seed);
}

}  // namespace hnn
