#pragma once

// NLI (premise, hypothesis) pairs to pronoun-resolution instances.
//
// The premise is split on whitespace; for a pronoun occurrence at token i the
// premise tokens left of i and right of i are each aligned against the
// hypothesis with a case-insensitive token-level longest common substring.
// Hypothesis tokens strictly between the two matched ranges form the
// candidate antecedent.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"
#include "hnn/instance.hpp"
#include "hnn/vocab.hpp"

namespace hnn {

/// Half-open token interval [begin, end).
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool operator==(const TokenRange&) const = default;
};

struct LcsMatch {
    TokenRange a;
    TokenRange b;
    std::size_t length = 0;
};

/// Longest contiguous run of case-insensitively equal tokens. Ties prefer the
/// earliest start in `b`, then the earliest start in `a`.
inline LcsMatch token_lcs(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::string> la, lb;
    for (const auto& t : a) la.push_back(ascii_lower(t));
    for (const auto& t : b) lb.push_back(ascii_lower(t));
    const std::size_t n = la.size(), m = lb.size();
    // run[j] = length of the common suffix ending at a[i-1], b[j-1].
    std::vector<std::size_t> prev(m + 1, 0), run(m + 1, 0);
    LcsMatch best;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            run[j] = la[i - 1] == lb[j - 1] ? prev[j - 1] + 1 : 0;
            const std::size_t len = run[j];
            if (len == 0) {
                continue;
            }
            const std::size_t a0 = i - len, b0 = j - len;
            const bool better = len > best.length ||
                                (len == best.length && (b0 < best.b.begin || (b0 == best.b.begin && a0 < best.a.begin)));
            if (better) {
                best = {{a0, i}, {b0, j}, len};
            }
        }
        std::swap(prev, run);
    }
    return best;
}

struct WhitespaceToken {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline std::vector<WhitespaceToken> whitespace_tokens(std::string_view text) {
    std::vector<WhitespaceToken> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_ascii_space(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && !is_ascii_space(text[j])) {
            ++j;
        }
        out.push_back({std::string(text.substr(i, j - i)), i, j});
        i = j;
    }
    return out;
}

/// Byte range of `s` with leading/trailing ASCII punctuation removed.
inline std::pair<std::size_t, std::size_t> strip_punct_range(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_ascii_punct(s[b])) ++b;
    while (e > b && is_ascii_punct(s[e - 1])) --e;
    return {b, e};
}

inline std::string strip_punct(std::string_view s) {
    auto [b, e] = strip_punct_range(s);
    return std::string(s.substr(b, e - b));
}

struct PronounLexicon {
    std::set<std::string> words{"he",  "she",  "it",   "they",   "him",     "her",     "them",   "his",
                                "hers", "its", "their", "theirs", "himself", "herself", "itself", "themselves"};

    bool contains(std::string_view token) const { return words.count(ascii_lower(strip_punct(token))) != 0; }
};

struct NliPair {
    std::string id;
    std::string premise;
    std::string hypothesis;
    std::optional<bool> entailed;
};

struct Extraction {
    std::size_t pronoun_token = 0;  // index among premise whitespace tokens
    PronounSpan pronoun;            // byte span inside the premise
    TokenRange left_match;          // hypothesis range aligned with the left context
    TokenRange right_match;         // hypothesis range aligned with the right context
    TokenRange candidate;           // hypothesis range strictly between the two
    std::string candidate_text;
    bool boundary_flag = false;  // one side had no alignment and was pinned to the hypothesis edge
    bool degenerate = false;     // candidate equals the pronoun itself
    std::size_t coverage() const { return left_match.size() + right_match.size(); }
};

namespace detail {

inline std::vector<std::string> texts_of(const std::vector<WhitespaceToken>& toks, std::size_t b, std::size_t e) {
    std::vector<std::string> out;
    for (std::size_t i = b; i < e; ++i) {
        out.push_back(toks[i].text);
    }
    return out;
}

inline Extraction align_at(const std::vector<WhitespaceToken>& premise, const std::vector<WhitespaceToken>& hyp,
                           std::string_view premise_text, std::size_t k) {
    const auto hyp_texts = texts_of(hyp, 0, hyp.size());
    const auto left = texts_of(premise, 0, k);
    const auto right = texts_of(premise, k + 1, premise.size());

    Extraction ex;
    ex.pronoun_token = k;
    auto [pb, pe] = strip_punct_range(premise[k].text);
    ex.pronoun.start = premise[k].begin + pb;
    ex.pronoun.end = premise[k].begin + pe;
    ex.pronoun.text = std::string(premise_text.substr(ex.pronoun.start, ex.pronoun.end - ex.pronoun.start));

    const LcsMatch l = token_lcs(left, hyp_texts);
    const LcsMatch r = token_lcs(right, hyp_texts);
    if (l.length == 0) {
        ex.left_match = {0, 0};
        ex.boundary_flag = true;
    } else {
        ex.left_match = l.b;
    }
    if (r.length == 0) {
        ex.right_match = {hyp.size(), hyp.size()};
        ex.boundary_flag = true;
    } else {
        ex.right_match = r.b;
    }
    return ex;
}

inline void finish_candidate(Extraction& ex, const std::vector<WhitespaceToken>& hyp, const std::string& pair_id) {
    if (ex.right_match.begin < ex.left_match.end) {
        throw AlignmentError("pair '" + pair_id + "': right match [" + std::to_string(ex.right_match.begin) + ", " +
                             std::to_string(ex.right_match.end) + ") does not follow left match [" +
                             std::to_string(ex.left_match.begin) + ", " + std::to_string(ex.left_match.end) +
                             ") for pronoun '" + ex.pronoun.text + "'");
    }
    if (ex.right_match.begin == ex.left_match.end) {
        throw AlignmentError("pair '" + pair_id + "': no hypothesis tokens between left match ending at " +
                             std::to_string(ex.left_match.end) + " and right match for pronoun '" + ex.pronoun.text +
                             "'");
    }
    ex.candidate = {ex.left_match.end, ex.right_match.begin};
    std::string joined;
    for (std::size_t i = ex.candidate.begin; i < ex.candidate.end; ++i) {
        if (!joined.empty()) {
            joined += ' ';
        }
        joined += hyp[i].text;
    }
    ex.candidate_text = strip_punct(joined);
    if (ex.candidate_text.empty()) {
        throw AlignmentError("pair '" + pair_id + "': candidate span holds only punctuation");
    }
    ex.degenerate = ascii_lower(ex.candidate_text) == ascii_lower(ex.pronoun.text);
}

}  // namespace detail

/// Extracts the candidate antecedent that `pair.hypothesis` substitutes for a
/// pronoun of `pair.premise`. Among pronoun occurrences the one with the
/// largest total alignment (left + right LCS length) wins; ties go to the
/// earliest occurrence, and occurrences whose alignment is inconsistent are
/// passed over when a consistent one exists.
inline Extraction convert_nli_pair(const NliPair& pair, const PronounLexicon& lexicon = {}) {
    if (pair.premise.empty() || pair.hypothesis.empty()) {
        throw ConversionError("pair '" + pair.id + "': premise and hypothesis must be nonempty");
    }
    const auto premise = whitespace_tokens(pair.premise);
    const auto hyp = whitespace_tokens(pair.hypothesis);
    std::vector<Extraction> options;
    for (std::size_t k = 0; k < premise.size(); ++k) {
        if (lexicon.contains(premise[k].text)) {
            options.push_back(detail::align_at(premise, hyp, pair.premise, k));
        }
    }
    if (options.empty()) {
        throw ConversionError("pair '" + pair.id + "': no pronoun found in premise");
    }
    std::stable_sort(options.begin(), options.end(),
                     [](const Extraction& x, const Extraction& y) { return x.coverage() > y.coverage(); });
    std::optional<AlignmentError> first_error;
    for (auto& ex : options) {
        try {
            detail::finish_candidate(ex, hyp, pair.id);
            return ex;
        } catch (const AlignmentError& e) {
            if (!first_error) {
                first_error = e;
            }
        }
    }
    throw *first_error;
}

/// Folds extractions that share a premise and pronoun into one instance.
/// Candidates are deduplicated case-insensitively keeping the first spelling;
/// entailed pairs mark their candidate positive, non-entailed negative.
inline Instance group_converted(const std::string& id, const std::string& premise,
                                const std::vector<Extraction>& extractions,
                                const std::vector<std::optional<bool>>& entailed) {
    if (extractions.empty()) {
        throw DataError("group '" + id + "': no successful extractions");
    }
    if (entailed.size() != extractions.size()) {
        throw DataError("group '" + id + "': label count differs from extraction count");
    }
    Instance inst;
    inst.id = id;
    inst.sentence = premise;
    inst.pronoun = extractions.front().pronoun;
    inst.source = Source::wnli_converted;
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < extractions.size(); ++i) {
        const auto& ex = extractions[i];
        if (ex.pronoun != inst.pronoun) {
            throw DataError("group '" + id + "': extractions refer to different pronouns");
        }
        const Label label =
            !entailed[i] ? Label::unknown : (*entailed[i] ? Label::positive : Label::negative);
        const std::string key = ascii_lower(ex.candidate_text);
        auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) {
            keys.push_back(key);
            inst.candidates.push_back({ex.candidate_text, label});
            continue;
        }
        auto& existing = inst.candidates[static_cast<std::size_t>(it - keys.begin())];
        if (existing.label == Label::unknown) {
            existing.label = label;
        } else if (label != Label::unknown && label != existing.label) {
            throw DataError("group '" + id + "': conflicting labels for candidate '" + existing.text + "'");
        }
    }
    inst.validate();
    return inst;
}

/// Rows of a WNLI-layout TSV: index, sentence1, sentence2[, label]. A header
/// row whose first field is "index" is skipped. Labels: 1/entailment,
/// 0/not_entailment.
inline std::vector<NliPair> read_nli_tsv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open " + path.string());
    }
    std::vector<NliPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (lineno == 1 && fields.front() == "index") {
            continue;
        }
        if (fields.size() < 3 || fields.size() > 4) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 3 or 4 tab-separated columns");
        }
        NliPair p{fields[0], fields[1], fields[2], std::nullopt};
        if (fields.size() == 4 && !fields[3].empty()) {
            const auto& l = fields[3];
            if (l == "1" || l == "entailment") {
                p.entailed = true;
            } else if (l == "0" || l == "not_entailment") {
                p.entailed = false;
            } else {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": unknown label '" + l + "'");
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

struct ConversionReport {
    std::size_t pairs = 0;
    std::size_t extracted = 0;
    std::map<std::string, std::size_t> failures;  // error class -> count
    std::size_t degenerate = 0;
    std::size_t boundary_flagged = 0;
    std::size_t instances = 0;
    std::vector<std::string> messages;

    nlohmann::json to_json() const {
        return {{"pairs", pairs},
                {"extracted", extracted},
                {"failures", failures},
                {"degenerate", degenerate},
                {"boundary_flagged", boundary_flagged},
                {"instances", instances},
                {"messages", messages}};
    }
};

/// Converts every pair and groups successes by (premise, pronoun occurrence)
/// in first-appearance order.
inline std::vector<Instance> convert_corpus(const std::vector<NliPair>& pairs, ConversionReport& report,
                                            const PronounLexicon& lexicon = {}) {
    struct Group {
        std::string premise;
        std::size_t pronoun_token;
        std::string first_id;
        std::vector<Extraction> extractions;
        std::vector<std::optional<bool>> labels;
    };
    std::vector<Group> groups;
    report.pairs += pairs.size();
    for (const auto& p : pairs) {
        try {
            auto ex = convert_nli_pair(p, lexicon);
            ++report.extracted;
            report.degenerate += ex.degenerate ? 1 : 0;
            report.boundary_flagged += ex.boundary_flag ? 1 : 0;
            auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
                return g.premise == p.premise && g.pronoun_token == ex.pronoun_token;
            });
            if (it == groups.end()) {
                groups.push_back({p.premise, ex.pronoun_token, p.id, {}, {}});
                it = std::prev(groups.end());
            }
            it->extractions.push_back(std::move(ex));
            it->labels.push_back(p.entailed);
        } catch (const AlignmentError& e) {
            ++report.failures["alignment"];
            report.messages.emplace_back(e.what());
        } catch (const ConversionError& e) {
            ++report.failures["conversion"];
            report.messages.emplace_back(e.what());
        }
    }
    std::vector<Instance> out;
    for (const auto& g : groups) {
        try {
            out.push_back(group_converted("wnli-" + g.first_id, g.premise, g.extractions, g.labels));
        } catch (const DataError& e) {
            ++report.failures["grouping"];
            report.messages.emplace_back(e.what());
        }
    }
    report.instances = out.size();
    return out;
}

}  // namespace hnn
