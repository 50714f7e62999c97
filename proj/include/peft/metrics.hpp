#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "peft/errors.hpp"

namespace peft {

using Tokens = std::vector<std::string>;

/// Normalization applied by tokenize(); either behavior can be switched off.
struct TokenizeOptions {
    bool lowercase = true;
    bool strip_punctuation = true;
};

/// Whitespace-split tokens, ASCII-lowercased, with surrounding (not interior)
/// ASCII punctuation stripped. Tokens that are punctuation-only disappear;
/// bytes outside ASCII pass through untouched.
inline Tokens tokenize(const std::string& text, const TokenizeOptions& options = {}) {
    Tokens tokens;
    std::size_t pos = 0;
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    const auto is_punct = [](unsigned char c) {
        return c < 0x80 && std::ispunct(c) != 0;
    };
    while (pos < text.size()) {
        while (pos < text.size() && is_space(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
        std::size_t end = pos;
        while (end < text.size() && !is_space(static_cast<unsigned char>(text[end]))) {
            ++end;
        }
        if (end == pos) {
            break;
        }
        std::size_t lo = pos;
        std::size_t hi = end;
        if (options.strip_punctuation) {
            while (lo < hi && is_punct(static_cast<unsigned char>(text[lo]))) {
                ++lo;
            }
            while (hi > lo && is_punct(static_cast<unsigned char>(text[hi - 1]))) {
                --hi;
            }
        }
        if (lo < hi) {
            std::string token = text.substr(lo, hi - lo);
            if (options.lowercase) {
                for (char& c : token) {
                    c = static_cast<char>(
                        std::tolower(static_cast<unsigned char>(c)));
                }
            }
            tokens.push_back(std::move(token));
        }
        pos = end;
    }
    return tokens;
}

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
    std::map<Tokens, std::size_t> counts;
    if (tokens.size() >= n) {
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            counts[Tokens(tokens.begin() + i, tokens.begin() + i + n)] += 1;
        }
    }
    return counts;
}

inline std::map<std::pair<std::string, std::string>, std::size_t>
skip_bigram_counts(const Tokens& tokens) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        for (std::size_t j = i + 1; j < tokens.size(); ++j) {
            counts[{tokens[i], tokens[j]}] += 1;
        }
    }
    return counts;
}

} // namespace detail

/// Recall-oriented n-gram overlap: per reference, clipped matching n-gram
/// count over the reference's n-gram total; the multi-reference score is the
/// arithmetic mean over references long enough to hold an n-gram. Every
/// reference shorter than n tokens is skipped; if that leaves none, the
/// metric is undefined.
inline double rouge_n(const Tokens& candidate, const std::vector<Tokens>& references,
                      std::size_t n) {
    if (n < 1) {
        throw ShapeError("rouge_n: n must be >= 1");
    }
    if (references.empty()) {
        throw UndefinedMetricError("rouge_n: no references given");
    }
    const std::map<Tokens, std::size_t> cand_counts = detail::ngram_counts(candidate, n);
    double sum = 0.0;
    std::size_t defined = 0;
    for (const Tokens& ref : references) {
        if (ref.size() < n) {
            continue;
        }
        const std::map<Tokens, std::size_t> ref_counts = detail::ngram_counts(ref, n);
        std::size_t clipped = 0;
        for (const auto& [gram, count] : ref_counts) {
            const auto it = cand_counts.find(gram);
            if (it != cand_counts.end()) {
                clipped += std::min(it->second, count);
            }
        }
        sum += static_cast<double>(clipped) / static_cast<double>(ref.size() - n + 1);
        ++defined;
    }
    if (defined == 0) {
        throw UndefinedMetricError("rouge_n: every reference is shorter than n = " +
                                   std::to_string(n));
    }
    return sum / static_cast<double>(defined);
}

/// Longest-common-subsequence recall: LCS(candidate, reference) / |reference|.
inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
    if (reference.empty()) {
        throw UndefinedMetricError("rouge_l: empty reference");
    }
    const std::size_t nc = candidate.size();
    const std::size_t nr = reference.size();
    std::vector<std::vector<std::size_t>> dp(nc + 1, std::vector<std::size_t>(nr + 1, 0));
    for (std::size_t i = 1; i <= nc; ++i) {
        for (std::size_t j = 1; j <= nr; ++j) {
            if (candidate[i - 1] == reference[j - 1]) {
                dp[i][j] = dp[i - 1][j - 1] + 1;
            } else {
                dp[i][j] = std::max(dp[i - 1][j], dp[i][j - 1]);
            }
        }
    }
    return static_cast<double>(dp[nc][nr]) / static_cast<double>(nr);
}

/// Skip-bigram recall with unlimited gap: every ordered token pair (i < j)
/// counts, clipped matching over the reference's C(|ref|, 2) pairs.
inline double rouge_s(const Tokens& candidate, const Tokens& reference) {
    if (reference.size() < 2) {
        throw UndefinedMetricError("rouge_s: reference holds no skip bigram");
    }
    const auto cand_counts = detail::skip_bigram_counts(candidate);
    const auto ref_counts = detail::skip_bigram_counts(reference);
    std::size_t clipped = 0;
    std::size_t total = 0;
    for (const auto& [pair, count] : ref_counts) {
        total += count;
        const auto it = cand_counts.find(pair);
        if (it != cand_counts.end()) {
            clipped += std::min(it->second, count);
        }
    }
    return static_cast<double>(clipped) / static_cast<double>(total);
}

/// Edit operations behind a word-error-rate score. The rate can exceed 1
/// when the hypothesis carries more errors than the reference has words.
struct WerBreakdown {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t matches = 0;
    double wer = 0.0;

    std::size_t total_edits() const { return substitutions + deletions + insertions; }
};

/// Levenshtein alignment of hypothesis against reference with unit costs.
/// The backtrace resolves cost ties in the order match, substitution,
/// deletion, insertion so the breakdown is deterministic.
inline WerBreakdown wer(const Tokens& reference, const Tokens& hypothesis) {
    if (reference.empty()) {
        throw UndefinedMetricError("wer: empty reference");
    }
    const std::size_t nr = reference.size();
    const std::size_t nh = hypothesis.size();
    std::vector<std::vector<std::size_t>> dp(nr + 1, std::vector<std::size_t>(nh + 1, 0));
    for (std::size_t i = 0; i <= nr; ++i) {
        dp[i][0] = i;
    }
    for (std::size_t j = 0; j <= nh; ++j) {
        dp[0][j] = j;
    }
    for (std::size_t i = 1; i <= nr; ++i) {
        for (std::size_t j = 1; j <= nh; ++j) {
            const std::size_t diag =
                dp[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
            dp[i][j] = std::min({diag, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
        }
    }

    WerBreakdown result;
    std::size_t i = nr;
    std::size_t j = nh;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] &&
            dp[i][j] == dp[i - 1][j - 1]) {
            ++result.matches;
            --i;
            --j;
        } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
            ++result.substitutions;
            --i;
            --j;
        } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
            ++result.deletions;
            --i;
        } else {
            ++result.insertions;
            --j;
        }
    }
    result.wer = static_cast<double>(result.total_edits()) / static_cast<double>(nr);
    return result;
}

} // namespace peft
