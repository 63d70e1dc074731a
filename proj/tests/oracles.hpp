#pragma once

// Independent reference computations shared by the unit suites and the
// acceptance binary. Everything here is written with plain loops over the raw
// parameter arrays rather than through the library's tensor ops.

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hnn/hnn.hpp"

namespace hnn::oracle {

/// Random well-formed instance: filler words around "it", candidates of 1..3 words.
inline Instance random_instance(std::mt19937_64& rng, const std::string& id, std::size_t n_candidates = 2) {
    static const std::vector<std::string> words{"red",   "tall",  "apple", "river", "stone", "quiet", "lamp",
                                                "green", "storm", "bread", "cloud", "sharp", "table", "wind",
                                                "glass", "lake",  "horse", "pencil", "cold",  "light"};
    std::uniform_int_distribution<std::size_t> word(0, words.size() - 1), left(0, 6), right(0, 6), clen(1, 3);
    std::string sentence;
    for (std::size_t i = 0, n = left(rng); i < n; ++i) sentence += words[word(rng)] + " ";
    const std::size_t start = sentence.size();
    sentence += "it";
    for (std::size_t i = 0, n = right(rng); i < n; ++i) sentence += " " + words[word(rng)];
    sentence += ".";
    Instance inst;
    inst.id = id;
    inst.sentence = sentence;
    inst.pronoun = {"it", start, start + 2};
    for (std::size_t c = 0; c < n_candidates; ++c) {
        std::string text = "the";
        for (std::size_t i = 0, n = clen(rng); i < n; ++i) text += " " + words[word(rng)];
        inst.candidates.push_back({text, c == 0 ? Label::positive : Label::negative});
    }
    inst.source = Source::synthetic;
    inst.validate();
    return inst;
}

/// Geometric mean over the masks of softmax(h W + b)[target], with the
/// softmax, projection, and averaging spelled out.
inline double mlm_score(const HnnModel& model, const PackedMlmExample& ex) {
    const auto& p = model.encoder;
    const Tensor hidden = encode(model.config, p, EncoderInput::unpadded(ex.token_ids, ex.segment_ids));
    const std::size_t d = model.config.d_model, V = model.config.vocab_size;
    double log_sum = 0.0;
    for (std::size_t k = 0; k < ex.mask_positions.size(); ++k) {
        std::vector<double> logits(V);
        for (std::size_t v = 0; v < V; ++v) {
            double z = p.mlm_bias.data()[v];
            for (std::size_t i = 0; i < d; ++i) {
                const double w = model.config.tie_mlm_weights ? p.token_embeddings.data()[v * d + i]
                                                              : p.mlm_weight.data()[i * V + v];
                z += hidden.data()[ex.mask_positions[k] * d + i] * w;
            }
            logits[v] = z;
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (double z : logits) mx = std::max(mx, z);
        double denom = 0.0;
        for (double z : logits) denom += std::exp(z - mx);
        log_sum += (logits[ex.target_token_ids[k]] - mx) - std::log(denom);
    }
    return std::exp(log_sum / static_cast<double>(ex.mask_positions.size()));
}

struct SsmTrace {
    std::vector<double> alphas;
    double sim = 0.0;
    double prob = 0.0;
};

/// Attentive pooling and the bilinear form with explicit index loops.
inline SsmTrace ssm_score(const HnnModel& model, const PackedSsmExample& ex) {
    const Tensor hidden = encode(model.config, model.encoder, EncoderInput::unpadded(ex.token_ids, ex.segment_ids));
    const std::size_t d = model.config.d_model;
    auto h = [&](std::size_t pos, std::size_t i) { return hidden.data()[pos * d + i]; };
    const auto& W1 = model.head.w1.data();
    const auto& W2 = model.head.w2.data();

    const std::size_t n = ex.candidate_positions.size();
    std::vector<double> scores(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) s += h(ex.cls_position, i) * W1[i * d + j] * h(ex.candidate_positions[k], j);
        scores[k] = s / std::sqrt(static_cast<double>(d));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    SsmTrace t;
    for (double s : scores) t.alphas.push_back(std::exp(s - mx) / z);

    std::vector<double> c(d, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < d; ++j) c[j] += t.alphas[k] * h(ex.candidate_positions[k], j);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) t.sim += h(ex.pronoun_first_position, i) * W2[i * d + j] * c[j];
    t.prob = 1.0 / (1.0 + std::exp(-t.sim));
    return t;
}

/// Longest common run by trying every pair of start positions and lengths.
/// Ties: earliest start in b, then earliest in a.
inline LcsMatch brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    auto eq = [](const std::string& x, const std::string& y) { return ascii_lower(x) == ascii_lower(y); };
    LcsMatch best;
    for (std::size_t bs = 0; bs < b.size(); ++bs) {
        for (std::size_t as = 0; as < a.size(); ++as) {
            for (std::size_t len = 1; as + len <= a.size() && bs + len <= b.size(); ++len) {
                bool all = true;
                for (std::size_t t = 0; t < len; ++t) all = all && eq(a[as + t], b[bs + t]);
                if (!all) continue;
                if (len > best.length) best = {{as, as + len}, {bs, bs + len}, len};
            }
        }
    }
    return best;
}

/// Accuracy of labeling score >= t as positive.
inline double threshold_accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double t) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) ok += ((scores[i] >= t) == (labels[i] == 1));
    return static_cast<double>(ok) / static_cast<double>(scores.size());
}

/// Every candidate cut: -inf, +inf, and each midpoint of adjacent distinct scores.
inline std::vector<double> threshold_candidates(std::vector<double> scores) {
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> out{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) out.push_back(0.5 * (scores[i] + scores[i + 1]));
    out.push_back(std::numeric_limits<double>::infinity());
    return out;
}

// ---------------------------------------------------------------------------
// 20-instance voting fixture over 8 recorded epochs. A window of 6 sees epochs
// 2..7; the first two epochs disagree with the window on purpose.

struct VoteCase {
    std::string id;
    std::size_t n_candidates;
    std::string votes;  // one letter per epoch, A = candidate 0
    std::map<char, std::vector<double>> rows;  // scores by voted letter; empty = 0.7 for the vote, 0.3 otherwise
    std::size_t expected;
};

inline const std::vector<VoteCase>& vote_fixture() {
    static const std::vector<VoteCase> cases{
        {"v01", 2, "BBAABABA", {}, 0},                                          // 4-2
        {"v02", 2, "BBAAABBB", {{'A', {0.6, 0.4}}, {'B', {0.45, 0.55}}}, 0},    // 3-3, sums 3.15 vs 2.85
        {"v03", 2, "AAAAABBB", {{'A', {0.6, 0.4}}, {'B', {0.1, 0.9}}}, 1},      // 3-3, sums 2.1 vs 3.9
        {"v04", 2, "AABBBBBB", {}, 1},                                          // unanimous in window
        {"v05", 3, "AACCABCA", {}, 2},                                          // C3 A2 B1
        {"v06", 3, "CCABCABC", {{'A', {0.2, 0.5, 0.3}}, {'B', {0.2, 0.5, 0.3}}, {'C', {0.2, 0.5, 0.3}}}, 1},
        {"v07", 2, "BBABABAB", {{'A', {0.5, 0.5}}, {'B', {0.5, 0.5}}}, 0},      // full tie: lowest index
        {"v08", 2, "BBAAAAAA", {}, 0},
        {"v09", 2, "ABBBBBBA", {}, 1},                                          // 5-1
        {"v10", 2, "AAABBBBA", {}, 1},                                          // 4-2
        {"v11", 2, "BAABAAAB", {}, 0},                                          // 4-2
        {"v12", 3, "ABBBCCCA", {}, 2},                                          // C3 B2 A1
        {"v13", 3, "CCAAABBB", {{'A', {0.4, 0.45, 0.15}}, {'B', {0.4, 0.45, 0.15}}}, 1},
        {"v14", 2, "BBBBBBBB", {}, 1},
        {"v15", 2, "AAAAAAAA", {}, 0},
        {"v16", 2, "ABABABBA", {{'A', {0.55, 0.45}}, {'B', {0.48, 0.52}}}, 0},  // 3-3, sums 3.09 vs 2.91
        {"v17", 3, "BBBBAACC", {{'A', {0.3, 0.3, 0.4}}, {'B', {0.3, 0.3, 0.4}}, {'C', {0.3, 0.3, 0.4}}}, 2},
        {"v18", 2, "BAAABABB", {{'A', {0.6, 0.4}}, {'B', {0.2, 0.8}}}, 1},      // 3-3, sums 2.4 vs 3.6
        {"v19", 3, "AAABCBBB", {}, 1},                                          // B4
        {"v20", 2, "ABAAAAAB", {}, 0},                                          // 5-1
    };
    return cases;
}

/// The fixture as per-epoch prediction lists.
inline std::vector<std::vector<InstancePrediction>> vote_history() {
    const auto& cases = vote_fixture();
    std::vector<std::vector<InstancePrediction>> history(8);
    for (std::size_t e = 0; e < 8; ++e) {
        for (const auto& c : cases) {
            const char letter = c.votes[e];
            const std::size_t pred = static_cast<std::size_t>(letter - 'A');
            std::vector<double> scores;
            if (auto it = c.rows.find(letter); it != c.rows.end()) {
                scores = it->second;
            } else {
                for (std::size_t k = 0; k < c.n_candidates; ++k) scores.push_back(k == pred ? 0.7 : 0.3);
            }
            history[e].push_back({c.id, pred, scores, 0});
        }
    }
    return history;
}

}  // namespace hnn::oracle
