#pragma once

// Template-generated pronoun-resolution corpus. Each sentence names one agent
// (animate) and one patient (object); the reason adjective after the pronoun
// decides which of the two the pronoun refers to.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"
#include "hnn/instance.hpp"

namespace hnn {

struct SyntheticTemplates {
    std::vector<std::string> agents{"dog",    "cat",   "boy",    "girl",    "man",    "woman",
                                    "farmer", "baker", "doctor", "teacher", "sailor", "child"};
    std::vector<std::string> patients{"ball", "box",   "chair",  "table", "rock", "bag",
                                      "lamp", "crate", "barrel", "log",   "vase", "bucket"};
    std::vector<std::string> verbs{"kicked", "carried", "pushed", "dropped", "lifted", "moved", "pulled", "dragged"};
    // Reasons that make the agent the referent.
    std::vector<std::string> agent_reasons{"hungry", "tired", "angry", "bored", "curious", "nervous"};
    // Reasons that make the patient the referent.
    std::vector<std::string> patient_reasons{"heavy", "broken", "slippery", "cracked", "empty", "rusty"};
    std::string pronoun = "it";

    std::size_t capacity() const {
        return agents.size() * patients.size() * verbs.size() * (agent_reasons.size() + patient_reasons.size()) * 2;
    }
};

inline nlohmann::json to_json(const SyntheticTemplates& t) {
    return {{"agents", t.agents},           {"patients", t.patients},
            {"verbs", t.verbs},             {"agent_reasons", t.agent_reasons},
            {"patient_reasons", t.patient_reasons}, {"pronoun", t.pronoun}};
}

inline SyntheticTemplates templates_from_json(const nlohmann::json& j) {
    SyntheticTemplates t;
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "agents") t.agents = v.get<std::vector<std::string>>();
            else if (key == "patients") t.patients = v.get<std::vector<std::string>>();
            else if (key == "verbs") t.verbs = v.get<std::vector<std::string>>();
            else if (key == "agent_reasons") t.agent_reasons = v.get<std::vector<std::string>>();
            else if (key == "patient_reasons") t.patient_reasons = v.get<std::vector<std::string>>();
            else if (key == "pronoun") t.pronoun = v.get<std::string>();
            else throw ConfigError("unknown template field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("templates." + key + ": " + e.what());
        }
    }
    return t;
}

struct SyntheticSplits {
    std::vector<Instance> train;
    std::vector<Instance> dev;
    std::vector<Instance> test;
};

namespace detail {

struct Instantiation {
    std::size_t agent, patient, verb, reason;  // reason indexes agent_reasons then patient_reasons
    bool passive;
};

inline Instance realize(const SyntheticTemplates& t, const Instantiation& k, const std::string& id, bool positive_first) {
    const std::string& agent = t.agents[k.agent];
    const std::string& patient = t.patients[k.patient];
    const std::string& verb = t.verbs[k.verb];
    const bool agent_is_referent = k.reason < t.agent_reasons.size();
    const std::string& reason =
        agent_is_referent ? t.agent_reasons[k.reason] : t.patient_reasons[k.reason - t.agent_reasons.size()];

    std::string head = k.passive ? "The " + patient + " was " + verb + " by the " + agent + " because "
                                 : "The " + agent + " " + verb + " the " + patient + " because ";
    Instance inst;
    inst.id = id;
    inst.sentence = head + t.pronoun + " was " + reason + ".";
    inst.pronoun = {t.pronoun, head.size(), head.size() + t.pronoun.size()};
    Candidate pos{"the " + (agent_is_referent ? agent : patient), Label::positive};
    Candidate neg{"the " + (agent_is_referent ? patient : agent), Label::negative};
    inst.candidates = positive_first ? std::vector<Candidate>{pos, neg} : std::vector<Candidate>{neg, pos};
    inst.source = Source::synthetic;
    inst.validate();
    return inst;
}

}  // namespace detail

/// Draws disjoint train/dev/test instantiations without replacement; every
/// instance has exactly one positive and one negative candidate, in random order.
inline SyntheticSplits build_synthetic_splits(const SyntheticTemplates& t, std::uint64_t seed, std::size_t n_train,
                                              std::size_t n_dev = 0, std::size_t n_test = 0) {
    if (t.agents.empty() || t.patients.empty() || t.verbs.empty() || t.agent_reasons.empty() ||
        t.patient_reasons.empty() || t.pronoun.empty()) {
        throw ConfigError("synthetic templates need nonempty pools");
    }
    const std::size_t requested = n_train + n_dev + n_test;
    if (requested > t.capacity()) {
        throw ConfigError("synthetic templates yield " + std::to_string(t.capacity()) + " distinct instances, " +
                          std::to_string(requested) + " requested");
    }
    std::vector<detail::Instantiation> keys;
    keys.reserve(t.capacity());
    const std::size_t n_reasons = t.agent_reasons.size() + t.patient_reasons.size();
    for (std::size_t a = 0; a < t.agents.size(); ++a)
        for (std::size_t p = 0; p < t.patients.size(); ++p)
            for (std::size_t v = 0; v < t.verbs.size(); ++v)
                for (std::size_t r = 0; r < n_reasons; ++r)
                    for (bool passive : {false, true}) keys.push_back({a, p, v, r, passive});

    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: only the first `requested` slots are needed.
    for (std::size_t i = 0; i < requested; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, keys.size() - 1);
        std::swap(keys[i], keys[pick(rng)]);
    }
    std::bernoulli_distribution coin(0.5);
    SyntheticSplits out;
    auto emit = [&](std::vector<Instance>& dst, std::size_t begin, std::size_t count, const char* tag) {
        for (std::size_t i = 0; i < count; ++i) {
            dst.push_back(detail::realize(t, keys[begin + i], std::string(tag) + "-" + std::to_string(i), coin(rng)));
        }
    };
    emit(out.train, 0, n_train, "train");
    emit(out.dev, n_train, n_dev, "dev");
    emit(out.test, n_train + n_dev, n_test, "test");
    return out;
}

inline std::vector<Instance> build_synthetic_corpus(const SyntheticTemplates& t, std::uint64_t seed, std::size_t size) {
    return build_synthetic_splits(t, seed, size).train;
}

}  // namespace hnn
