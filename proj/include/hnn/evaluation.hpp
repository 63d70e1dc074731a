#pragma once

// Ranking and classification evaluation over combined candidate scores.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/model.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

/// Ranking prediction for one instance.
struct InstancePrediction {
    std::string id;
    std::size_t predicted = 0;
    std::vector<double> scores;  // combined score per candidate
    std::optional<std::size_t> gold;

    bool operator==(const InstancePrediction&) const = default;
};

inline nlohmann::json to_json(const InstancePrediction& p) {
    nlohmann::json j = {{"id", p.id}, {"prediction", p.predicted}, {"scores", p.scores}};
    j["gold"] = p.gold ? nlohmann::json(*p.gold) : nlohmann::json(nullptr);
    return j;
}

inline InstancePrediction prediction_from_json(const nlohmann::json& j) {
    try {
        InstancePrediction p;
        p.id = j.at("id").get<std::string>();
        p.predicted = j.at("prediction").get<std::size_t>();
        p.scores = j.at("scores").get<std::vector<double>>();
        if (j.contains("gold") && !j.at("gold").is_null()) {
            p.gold = j.at("gold").get<std::size_t>();
        }
        if (p.predicted >= p.scores.size()) {
            throw ParseError("prediction for '" + p.id + "' indexes past its score vector");
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("prediction record: ") + e.what());
    }
}

/// Index of the maximum; ties go to the lowest index.
inline std::size_t argmax_first(const std::vector<double>& xs) {
    if (xs.empty()) {
        throw DataError("argmax of an empty score vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) {
            best = i;
        }
    }
    return best;
}

/// Combined score of every candidate of every instance.
inline std::vector<std::vector<double>> score_corpus(const HnnModel& model, const Vocab& vocab,
                                                     const std::vector<Instance>& instances) {
    std::vector<std::vector<double>> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        std::vector<double> s;
        s.reserve(inst.candidates.size());
        for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
            s.push_back(score_instance(model, vocab, inst, c).combined);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<InstancePrediction> rank_predictions(const std::vector<Instance>& instances,
                                                        const std::vector<std::vector<double>>& scores) {
    if (scores.size() != instances.size()) {
        throw DimensionError("rank_predictions: " + std::to_string(scores.size()) + " score rows for " +
                             std::to_string(instances.size()) + " instances");
    }
    std::vector<InstancePrediction> out;
    out.reserve(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (scores[i].size() != instances[i].candidates.size()) {
            throw DimensionError("rank_predictions: score count mismatch for '" + instances[i].id + "'");
        }
        out.push_back({instances[i].id, argmax_first(scores[i]), scores[i], instances[i].positive_index()});
    }
    return out;
}

enum class Formulation { ranking, classification };

inline const char* to_string(Formulation f) { return f == Formulation::ranking ? "ranking" : "classification"; }

inline Formulation parse_formulation(const std::string& s) {
    if (s == "ranking") return Formulation::ranking;
    if (s == "classification") return Formulation::classification;
    throw ConfigError("formulation must be 'ranking' or 'classification', got '" + s + "'");
}

struct EvalRecord {
    std::string id;
    std::vector<double> scores;
    // ranking: one entry, the chosen candidate; classification: a 0/1 label per candidate
    std::vector<std::size_t> prediction;
    // ranking: the positive index; classification: a 0/1 label per candidate
    std::vector<std::size_t> gold;
    std::size_t correct = 0;
    std::size_t total = 0;
};

struct EvalReport {
    Formulation formulation = Formulation::ranking;
    double accuracy = 0.0;
    std::size_t n_instances = 0;  // decisions counted in the accuracy
    std::size_t n_correct = 0;
    std::size_t skipped = 0;
    std::optional<double> threshold;
    std::vector<EvalRecord> records;
    std::vector<std::string> warnings;
};

/// Non-finite thresholds serialize as the strings "-inf" / "+inf".
inline nlohmann::json threshold_to_json(double t) {
    if (std::isinf(t)) {
        return t < 0 ? "-inf" : "+inf";
    }
    return t;
}

inline double threshold_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "+inf") return std::numeric_limits<double>::infinity();
        throw ParseError("invalid threshold '" + s + "'");
    }
    return j.get<double>();
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : r.records) {
        records.push_back({{"id", rec.id}, {"scores", rec.scores}, {"prediction", rec.prediction}, {"gold", rec.gold}});
    }
    nlohmann::json j = {{"formulation", to_string(r.formulation)},
                        {"accuracy", r.accuracy},
                        {"n_instances", r.n_instances},
                        {"n_correct", r.n_correct},
                        {"skipped", r.skipped},
                        {"records", std::move(records)}};
    j["threshold"] = r.threshold ? threshold_to_json(*r.threshold) : nlohmann::json(nullptr);
    return j;
}

inline double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

/// Argmax over candidate scores; instances without a unique positive are skipped.
inline EvalReport rank_scores(const std::vector<Instance>& instances, const std::vector<std::vector<double>>& scores) {
    const auto preds = rank_predictions(instances, scores);
    EvalReport r;
    r.formulation = Formulation::ranking;
    for (const auto& p : preds) {
        if (!p.gold) {
            ++r.skipped;
            continue;
        }
        EvalRecord rec{p.id, p.scores, {p.predicted}, {*p.gold}, p.predicted == *p.gold ? 1u : 0u, 1};
        r.n_correct += rec.correct;
        ++r.n_instances;
        r.records.push_back(std::move(rec));
    }
    r.accuracy = safe_ratio(r.n_correct, r.n_instances);
    return r;
}

inline EvalReport eval_ranking(const HnnModel& model, const Vocab& vocab, const std::vector<Instance>& instances) {
    return rank_scores(instances, score_corpus(model, vocab, instances));
}

/// Ranking accuracy of recorded predictions whose gold is known.
inline double ranking_accuracy(const std::vector<InstancePrediction>& preds) {
    std::size_t n = 0, ok = 0;
    for (const auto& p : preds) {
        if (p.gold) {
            ++n;
            ok += p.predicted == *p.gold ? 1 : 0;
        }
    }
    return safe_ratio(ok, n);
}

struct ThresholdFit {
    double threshold = 0.0;
    double accuracy = 0.0;
    bool degenerate = false;
    std::optional<std::string> warning;
};

/// Threshold maximizing accuracy of `score >= t` against 0/1 labels. Candidate
/// thresholds are -inf, the midpoints between adjacent distinct scores, and
/// +inf; ties go to the smallest threshold.
inline ThresholdFit scan_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("scan_threshold: " + std::to_string(scores.size()) + " scores, " +
                             std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) {
        throw DataError("scan_threshold: no scored examples");
    }
    std::vector<std::pair<double, int>> xs;
    xs.reserve(scores.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) {
            throw DomainError("scan_threshold: NaN score");
        }
        if (labels[i] != 0 && labels[i] != 1) {
            throw DataError("scan_threshold: labels must be 0 or 1");
        }
        xs.emplace_back(scores[i], labels[i]);
        n_pos += static_cast<std::size_t>(labels[i]);
    }
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();

    ThresholdFit fit;
    // t = -inf: everything labeled 1.
    std::size_t correct = n_pos;
    std::size_t best = correct;
    fit.threshold = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && xs[j].first == xs[i].first) {
            // Raising the threshold past this score flips the group to 0.
            correct += xs[j].second == 0 ? 1 : 0;
            correct -= xs[j].second == 1 ? 1 : 0;
            ++j;
        }
        double t;
        if (j == n) {
            t = std::numeric_limits<double>::infinity();
        } else {
            t = xs[i].first + (xs[j].first - xs[i].first) / 2.0;
            if (!(t > xs[i].first)) {
                t = xs[j].first;
            }
        }
        if (correct > best) {
            best = correct;
            fit.threshold = t;
        }
        i = j;
    }
    fit.accuracy = safe_ratio(best, n);
    if (n_pos == 0 || n_pos == n) {
        fit.degenerate = true;
        fit.warning = std::string("single-class dev set; threshold pinned at ") +
                      (n_pos == 0 ? "+inf" : "-inf");
    }
    return fit;
}

namespace detail {

inline void binary_labels(const std::vector<Instance>& instances, const std::vector<std::vector<double>>& scores,
                          std::vector<double>& flat_scores, std::vector<int>& flat_labels) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
        for (std::size_t c = 0; c < instances[i].candidates.size(); ++c) {
            const Label l = instances[i].candidates[c].label;
            if (l == Label::unknown) {
                continue;
            }
            flat_scores.push_back(scores[i][c]);
            flat_labels.push_back(l == Label::positive ? 1 : 0);
        }
    }
}

}  // namespace detail

/// Fits a threshold on dev scores and labels every test candidate 1 iff its
/// score is >= the threshold. Accuracy counts candidate decisions.
inline EvalReport classify_scores(const std::vector<Instance>& dev, const std::vector<std::vector<double>>& dev_scores,
                                  const std::vector<Instance>& test,
                                  const std::vector<std::vector<double>>& test_scores) {
    if (dev_scores.size() != dev.size() || test_scores.size() != test.size()) {
        throw DimensionError("classify_scores: score rows do not match instances");
    }
    std::vector<double> s;
    std::vector<int> y;
    detail::binary_labels(dev, dev_scores, s, y);
    const ThresholdFit fit = scan_threshold(s, y);

    EvalReport r;
    r.formulation = Formulation::classification;
    r.threshold = fit.threshold;
    if (fit.warning) {
        r.warnings.push_back(*fit.warning);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test_scores[i].size() != test[i].candidates.size()) {
            throw DimensionError("classify_scores: score count mismatch for '" + test[i].id + "'");
        }
        EvalRecord rec;
        rec.id = test[i].id;
        rec.scores = test_scores[i];
        for (std::size_t c = 0; c < test[i].candidates.size(); ++c) {
            const std::size_t pred = test_scores[i][c] >= fit.threshold ? 1 : 0;
            rec.prediction.push_back(pred);
            const Label l = test[i].candidates[c].label;
            if (l == Label::unknown) {
                rec.gold.push_back(pred);  // placeholder, not counted
                continue;
            }
            const std::size_t gold = l == Label::positive ? 1 : 0;
            ++rec.total;
            rec.correct += pred == gold ? 1 : 0;
            rec.gold.push_back(gold);
        }
        if (rec.total == 0) {
            ++r.skipped;
            continue;
        }
        r.n_instances += rec.total;
        r.n_correct += rec.correct;
        r.records.push_back(std::move(rec));
    }
    r.accuracy = safe_ratio(r.n_correct, r.n_instances);
    return r;
}

inline EvalReport eval_classification(const HnnModel& model, const Vocab& vocab, const std::vector<Instance>& dev,
                                      const std::vector<Instance>& test) {
    return classify_scores(dev, score_corpus(model, vocab, dev), test, score_corpus(model, vocab, test));
}

/// Ranking-vs-classification comparison on one test set.
struct FormulationComparison {
    EvalReport ranking;
    EvalReport classification;
};

inline FormulationComparison compare_formulations(const HnnModel& model, const Vocab& vocab,
                                                  const std::vector<Instance>& dev,
                                                  const std::vector<Instance>& test) {
    const auto dev_scores = score_corpus(model, vocab, dev);
    const auto test_scores = score_corpus(model, vocab, test);
    return {rank_scores(test, test_scores), classify_scores(dev, dev_scores, test, test_scores)};
}

inline nlohmann::json to_json(const FormulationComparison& c) {
    return {{"rows",
             {{{"formulation", "ranking"}, {"accuracy", c.ranking.accuracy}, {"n", c.ranking.n_instances}},
              {{"formulation", "classification"},
               {"accuracy", c.classification.accuracy},
               {"n", c.classification.n_instances},
               {"threshold", threshold_to_json(c.classification.threshold.value_or(0.0))}}}}};
}

inline std::string to_markdown(const FormulationComparison& c) {
    std::string out = "| Formulation | Accuracy |\n|---|---|\n";
    auto row = [&](const char* name, double acc) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * acc);
        out += std::string("| ") + name + " | " + buf + " |\n";
    };
    row("Ranking", c.ranking.accuracy);
    row("Classification", c.classification.accuracy);
    return out;
}

}  // namespace hnn
