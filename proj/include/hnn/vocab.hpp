#pragma once

// Lowercasing whitespace/punctuation splitter followed by greedy
// longest-match subword segmentation ("##" marks continuation pieces).

#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hnn/errors.hpp"

namespace hnn {

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

inline bool is_ascii_punct(char ch) { return std::ispunct(static_cast<unsigned char>(ch)) != 0; }
inline bool is_ascii_space(char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; }

struct TextSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const TextSpan&) const = default;
};

/// Word-level pieces of `text` with byte offsets; punctuation characters stand alone.
inline std::vector<TextSpan> basic_split(std::string_view text) {
    std::vector<TextSpan> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_ascii_space(text[i])) {
            ++i;
        } else if (is_ascii_punct(text[i])) {
            out.push_back({i, i + 1});
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && !is_ascii_space(text[j]) && !is_ascii_punct(text[j])) {
                ++j;
            }
            out.push_back({i, j});
            i = j;
        }
    }
    return out;
}

struct TokenPiece {
    std::size_t id = 0;
    TextSpan span;
};

class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kCls = 2;
    static constexpr std::size_t kSep = 3;
    static constexpr std::size_t kMask = 4;
    static constexpr std::size_t kNumSpecial = 5;
    static constexpr std::string_view kContinuation = "##";
    static constexpr std::size_t kMaxWordChars = 100;

    Vocab() {
        for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) {
            tokens_.emplace_back(s);
        }
    }

    /// Specials followed by `tokens` in order; duplicates are ignored.
    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        Vocab v;
        for (const auto& t : tokens) {
            v.add(t);
        }
        return v;
    }

    /// Whole-word vocabulary covering every basic-split piece of `texts`, in
    /// first-appearance order.
    static Vocab build(const std::vector<std::string>& texts) {
        Vocab v;
        for (const auto& text : texts) {
            for (const auto& span : basic_split(text)) {
                v.add(ascii_lower(std::string_view(text).substr(span.begin, span.end - span.begin)));
            }
        }
        return v;
    }

    std::size_t add(const std::string& token) {
        if (auto id = find(token)) {
            return *id;
        }
        const std::size_t id = tokens_.size();
        ids_.emplace(token, id);
        tokens_.push_back(token);
        return id;
    }

    /// Looks up a text token; never returns a special id.
    std::optional<std::size_t> find(std::string_view token) const {
        auto it = ids_.find(std::string(token));
        if (it == ids_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    const std::string& token(std::size_t id) const {
        if (id >= tokens_.size()) {
            throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(tokens_.size()));
        }
        return tokens_[id];
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) {
            throw DataError("cannot write vocabulary " + path.string());
        }
        for (const auto& t : tokens_) {
            os << t << '\n';
        }
    }

    static Vocab load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) {
            throw DataError("cannot read vocabulary " + path.string());
        }
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(is, line)) {
            lines.push_back(line);
        }
        Vocab fresh;
        if (lines.size() < kNumSpecial ||
            !std::equal(fresh.tokens_.begin(), fresh.tokens_.end(), lines.begin())) {
            throw ParseError("vocabulary " + path.string() + " does not start with the special tokens");
        }
        return from_tokens(std::vector<std::string>(lines.begin() + kNumSpecial, lines.end()));
    }

    bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

/// Tokens of `text` with the byte span each covers in the original string.
inline std::vector<TokenPiece> tokenize(const Vocab& vocab, std::string_view text) {
    std::vector<TokenPiece> out;
    for (const auto& word : basic_split(text)) {
        const std::string lower = ascii_lower(text.substr(word.begin, word.end - word.begin));
        if (lower.size() > Vocab::kMaxWordChars) {
            out.push_back({Vocab::kUnk, word});
            continue;
        }
        std::vector<TokenPiece> pieces;
        std::size_t start = 0;
        bool failed = false;
        while (start < lower.size()) {
            std::optional<std::size_t> found;
            std::size_t end = lower.size();
            for (; end > start; --end) {
                std::string candidate = lower.substr(start, end - start);
                if (start > 0) {
                    candidate.insert(0, Vocab::kContinuation);
                }
                if ((found = vocab.find(candidate))) {
                    break;
                }
            }
            if (!found) {
                failed = true;
                break;
            }
            pieces.push_back({*found, {word.begin + start, word.begin + end}});
            start = end;
        }
        if (failed) {
            out.push_back({Vocab::kUnk, word});
        } else {
            out.insert(out.end(), pieces.begin(), pieces.end());
        }
    }
    return out;
}

}  // namespace hnn
