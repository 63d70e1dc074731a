#pragma once

// Pronoun-resolution instances and their JSONL serialization.
//
// One JSON object per line:
//   {"id": str, "sentence": str,
//    "pronoun": {"text": str, "start": int, "end": int},   // byte offsets, end exclusive
//    "candidates": [{"text": str, "label": "positive"|"negative"|"unknown"}, ...],
//    "source": "wsc"|"wscr"|"pdp"|"wnli-converted"|"synthetic"}
// Readers also accept an optional "schema_version" (must be 1).

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"

namespace hnn {

inline constexpr int kInstanceSchemaVersion = 1;

enum class Label { positive, negative, unknown };
enum class Source { wsc, wscr, pdp, wnli_converted, synthetic };

inline const char* to_string(Label l) {
    switch (l) {
        case Label::positive: return "positive";
        case Label::negative: return "negative";
        case Label::unknown: return "unknown";
    }
    return "unknown";
}

inline Label parse_label(const std::string& s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    if (s == "unknown") return Label::unknown;
    throw ParseError("unknown candidate label '" + s + "'");
}

inline const char* to_string(Source s) {
    switch (s) {
        case Source::wsc: return "wsc";
        case Source::wscr: return "wscr";
        case Source::pdp: return "pdp";
        case Source::wnli_converted: return "wnli-converted";
        case Source::synthetic: return "synthetic";
    }
    return "synthetic";
}

inline Source parse_source(const std::string& s) {
    if (s == "wsc") return Source::wsc;
    if (s == "wscr") return Source::wscr;
    if (s == "pdp") return Source::pdp;
    if (s == "wnli-converted") return Source::wnli_converted;
    if (s == "synthetic") return Source::synthetic;
    throw ParseError("unknown instance source '" + s + "'");
}

struct PronounSpan {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
    bool operator==(const PronounSpan&) const = default;
};

struct Candidate {
    std::string text;
    Label label = Label::unknown;
    bool operator==(const Candidate&) const = default;
};

struct Instance {
    std::string id;
    std::string sentence;
    PronounSpan pronoun;
    std::vector<Candidate> candidates;
    Source source = Source::synthetic;

    bool operator==(const Instance&) const = default;

    void validate() const {
        if (pronoun.start >= pronoun.end || pronoun.end > sentence.size() ||
            sentence.compare(pronoun.start, pronoun.end - pronoun.start, pronoun.text) != 0) {
            throw DataError("instance '" + id + "': pronoun span [" + std::to_string(pronoun.start) + ", " +
                            std::to_string(pronoun.end) + ") does not match text '" + pronoun.text + "'");
        }
        if (candidates.empty()) {
            throw DataError("instance '" + id + "' has no candidates");
        }
        for (const auto& c : candidates) {
            if (c.text.empty()) {
                throw DataError("instance '" + id + "' has an empty candidate");
            }
        }
    }

    /// Index of the unique positive candidate, if exactly one exists.
    std::optional<std::size_t> positive_index() const {
        std::optional<std::size_t> found;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (candidates[i].label == Label::positive) {
                if (found) {
                    return std::nullopt;
                }
                found = i;
            }
        }
        return found;
    }
};

inline nlohmann::json to_json(const Instance& inst) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : inst.candidates) {
        cands.push_back({{"text", c.text}, {"label", to_string(c.label)}});
    }
    return {{"id", inst.id},
            {"sentence", inst.sentence},
            {"pronoun", {{"text", inst.pronoun.text}, {"start", inst.pronoun.start}, {"end", inst.pronoun.end}}},
            {"candidates", std::move(cands)},
            {"source", to_string(inst.source)}};
}

inline Instance instance_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> allowed = {"id", "sentence", "pronoun", "candidates", "source",
                                                     "schema_version"};
    Instance inst;
    try {
        if (!j.is_object()) {
            throw ParseError("instance is not a JSON object");
        }
        for (const auto& [key, _] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw ParseError("unknown field '" + key + "'");
            }
        }
        if (j.contains("schema_version") && j.at("schema_version").get<int>() != kInstanceSchemaVersion) {
            throw ParseError("unsupported schema_version " + j.at("schema_version").dump());
        }
        inst.id = j.at("id").get<std::string>();
        inst.sentence = j.at("sentence").get<std::string>();
        const auto& p = j.at("pronoun");
        inst.pronoun.text = p.at("text").get<std::string>();
        inst.pronoun.start = p.at("start").get<std::size_t>();
        inst.pronoun.end = p.at("end").get<std::size_t>();
        for (const auto& c : j.at("candidates")) {
            inst.candidates.push_back({c.at("text").get<std::string>(), parse_label(c.at("label").get<std::string>())});
        }
        inst.source = parse_source(j.at("source").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("schema violation: ") + e.what());
    }
    inst.validate();
    return inst;
}

struct ReadResult {
    std::vector<Instance> instances;
    std::vector<std::string> errors;  // one per skipped line, "path:line: message"
};

/// Reads JSONL instances. Malformed lines throw unless `skip_malformed`, in
/// which case they are reported in `errors` and skipped.
inline ReadResult read_instances(const std::filesystem::path& path, bool skip_malformed = false) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open " + path.string());
    }
    ReadResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("invalid JSON: ") + e.what());
            }
            out.instances.push_back(instance_from_json(j));
        } catch (const DataError& e) {
            std::string msg = path.string() + ":" + std::to_string(lineno) + ": " + e.what();
            if (!skip_malformed) {
                throw ParseError(msg);
            }
            out.errors.push_back(std::move(msg));
        }
    }
    return out;
}

inline void write_instances(const std::filesystem::path& path, const std::vector<Instance>& instances) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    for (const auto& inst : instances) {
        os << to_json(inst).dump() << '\n';
    }
}

}  // namespace hnn
