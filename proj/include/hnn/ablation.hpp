#pragma once

// Trains the full model and its ablations on identical seeds and corpora and
// tabulates dev ranking accuracy per dataset.

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/config.hpp"
#include "hnn/errors.hpp"
#include "hnn/evaluation.hpp"
#include "hnn/instance.hpp"
#include "hnn/training.hpp"

namespace hnn {

enum class Variant { full, no_ssm, no_mlm, no_rank };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::full: return "HNN";
        case Variant::no_ssm: return "-SSM";
        case Variant::no_mlm: return "-MLM";
        case Variant::no_rank: return "-Rank";
    }
    return "HNN";
}

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::full, Variant::no_ssm, Variant::no_mlm, Variant::no_rank};
    return v;
}

/// `base` with one head or loss term removed.
inline RunConfig apply_variant(RunConfig base, Variant v) {
    switch (v) {
        case Variant::full:
            break;
        case Variant::no_ssm:
            base.model.use_ssm = false;
            base.train.loss.enable_ssm = false;
            break;
        case Variant::no_mlm:
            base.model.use_mlm = false;
            base.train.loss.enable_mlm = false;
            break;
        case Variant::no_rank:
            base.train.loss.enable_rank = false;
            break;
    }
    return base;
}

struct AblationDataset {
    std::string name;
    std::vector<Instance> train;
    std::vector<Instance> dev;
};

struct AblationCell {
    double accuracy = 0.0;
    std::size_t selected_epoch = 0;
    std::vector<InstancePrediction> predictions;
};

struct AblationTable {
    std::vector<std::string> columns;  // dataset names
    std::vector<Variant> rows;
    std::vector<std::vector<AblationCell>> cells;  // [row][column]
};

inline AblationTable ablation_matrix(const std::vector<AblationDataset>& datasets, const RunConfig& base,
                                     const std::vector<Variant>& variants = all_variants()) {
    if (datasets.empty()) {
        throw ConfigError("ablation_matrix: no datasets");
    }
    AblationTable t;
    for (const auto& d : datasets) t.columns.push_back(d.name);
    t.rows = variants;
    for (Variant v : variants) {
        const RunConfig cfg = apply_variant(base, v);
        cfg.validate();
        std::vector<AblationCell> row;
        for (const auto& d : datasets) {
            const Vocab vocab = corpus_vocab({&d.train, &d.dev});
            const auto result = train(make_model(cfg, vocab), vocab, d.train, d.dev, cfg.resolved_train());
            AblationCell cell;
            cell.selected_epoch = result.state.best_epoch;
            cell.predictions = rank_predictions(d.dev, score_corpus(result.selected, vocab, d.dev));
            cell.accuracy = ranking_accuracy(cell.predictions);
            row.push_back(std::move(cell));
        }
        t.cells.push_back(std::move(row));
    }
    return t;
}

inline nlohmann::json to_json(const AblationTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        nlohmann::json acc = nlohmann::json::object();
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            acc[t.columns[c]] = t.cells[r][c].accuracy;
        }
        rows.push_back({{"variant", to_string(t.rows[r])}, {"accuracy", std::move(acc)}});
    }
    return {{"columns", t.columns}, {"rows", std::move(rows)}};
}

/// Markdown table, accuracies in percent with one decimal.
inline std::string to_markdown(const AblationTable& t) {
    std::string out = "| Model |";
    std::string rule = "|---|";
    for (const auto& c : t.columns) {
        out += " " + c + " |";
        rule += "---|";
    }
    out += "\n" + rule + "\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += std::string("| ") + to_string(t.rows[r]) + " |";
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            char buf[32];
            std::snprintf(buf, sizeof buf, " %.1f |", 100.0 * t.cells[r][c].accuracy);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace hnn
