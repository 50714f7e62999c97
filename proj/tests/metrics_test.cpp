#include <gtest/gtest.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "peft/metrics.hpp"
#include "peft/rng.hpp"

namespace {

using peft::Tokens;
using peft::TokenizeOptions;
using peft::WerBreakdown;

Tokens tok(const std::string& text) { return peft::tokenize(text); }

// Independent clipped-overlap computation that never builds a count map:
// n-grams are joined into strings and counted by direct scans.
double oracle_rouge_n(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t n) {
    auto grams = [&](const Tokens& toks) {
        std::vector<std::string> out;
        if (toks.size() < n) {
            return out;
        }
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            std::string joined;
            for (std::size_t k = 0; k < n; ++k) {
                joined += toks[i + k];
                joined += '\x1f';
            }
            out.push_back(joined);
        }
        return out;
    };
    auto count_of = [](const std::vector<std::string>& grams, const std::string& g) {
        std::size_t c = 0;
        for (const auto& x : grams) {
            if (x == g) {
                ++c;
            }
        }
        return c;
    };
    const std::vector<std::string> cgrams = grams(cand);
    double sum = 0.0;
    std::size_t defined = 0;
    for (const Tokens& ref : refs) {
        const std::vector<std::string> rgrams = grams(ref);
        if (rgrams.empty()) {
            continue;
        }
        std::size_t clipped = 0;
        for (std::size_t i = 0; i < rgrams.size(); ++i) {
            bool first = true;
            for (std::size_t k = 0; k < i; ++k) {
                if (rgrams[k] == rgrams[i]) {
                    first = false;
                    break;
                }
            }
            if (!first) {
                continue;
            }
            clipped += std::min(count_of(rgrams, rgrams[i]), count_of(cgrams, rgrams[i]));
        }
        sum += static_cast<double>(clipped) / static_cast<double>(rgrams.size());
        ++defined;
    }
    if (defined == 0) {
        throw peft::UndefinedMetricError("oracle: undefined");
    }
    return sum / static_cast<double>(defined);
}

// Memoized recursive Levenshtein distance.
std::size_t oracle_lev(const Tokens& ref, const Tokens& hyp, std::size_t i, std::size_t j,
                       std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
    if (i == 0) {
        return j;
    }
    if (j == 0) {
        return i;
    }
    const auto key = std::make_pair(i, j);
    const auto it = memo.find(key);
    if (it != memo.end()) {
        return it->second;
    }
    const std::size_t diag = oracle_lev(ref, hyp, i - 1, j - 1, memo) +
                             (ref[i - 1] == hyp[j - 1] ? 0 : 1);
    const std::size_t del = oracle_lev(ref, hyp, i - 1, j, memo) + 1;
    const std::size_t ins = oracle_lev(ref, hyp, i, j - 1, memo) + 1;
    const std::size_t best = std::min({diag, del, ins});
    memo[key] = best;
    return best;
}

std::size_t oracle_lev(const Tokens& ref, const Tokens& hyp) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    return oracle_lev(ref, hyp, ref.size(), hyp.size(), memo);
}

Tokens random_tokens(peft::Rng& rng, std::size_t max_len, std::size_t vocab) {
    const std::size_t len = rng.next_u64() % (max_len + 1);
    Tokens out;
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(std::string(1, static_cast<char>('a' + rng.next_u64() % vocab)));
    }
    return out;
}

TEST(Tokenize, NormalizesCasePunctuationAndWhitespace) {
    EXPECT_EQ(tok("The cat, the HAT."), (Tokens{"the", "cat", "the", "hat"}));
    EXPECT_EQ(tok("  spaced\tout\nwords  "), (Tokens{"spaced", "out", "words"}));
    EXPECT_EQ(tok("-- hello --"), (Tokens{"hello"}));
    EXPECT_EQ(tok("can't stop"), (Tokens{"can't", "stop"}));
    EXPECT_EQ(tok(""), Tokens{});
    EXPECT_EQ(tok(" .,;! "), Tokens{});
}

TEST(Tokenize, NormalizationCanBeDisabled) {
    TokenizeOptions keep_case;
    keep_case.lowercase = false;
    EXPECT_EQ(peft::tokenize("The HAT.", keep_case), (Tokens{"The", "HAT"}));

    TokenizeOptions keep_punct;
    keep_punct.strip_punctuation = false;
    EXPECT_EQ(peft::tokenize("The HAT.", keep_punct), (Tokens{"the", "hat."}));

    TokenizeOptions raw;
    raw.lowercase = false;
    raw.strip_punctuation = false;
    EXPECT_EQ(peft::tokenize("The HAT.", raw), (Tokens{"The", "HAT."}));
}

TEST(RougeN, UnigramWorkedExample) {
    EXPECT_EQ(peft::rouge_n(tok("the cat sat"), {tok("the cat ran")}, 1), 2.0 / 3.0);
}

TEST(RougeN, ClippingCapsRepeatedMatches) {
    EXPECT_EQ(peft::rouge_n(tok("a a"), {tok("a a a")}, 1), 2.0 / 3.0);
    EXPECT_EQ(peft::rouge_n(tok("a a a a"), {tok("a a")}, 1), 1.0);
}

TEST(RougeN, BigramWorkedExample) {
    EXPECT_EQ(peft::rouge_n(tok("the cat sat"), {tok("the cat ran")}, 2), 0.5);
}

TEST(RougeN, MultiReferenceIsArithmeticMean) {
    const Tokens cand = tok("the cat sat");
    const Tokens r1 = tok("the cat ran");
    const Tokens r2 = tok("a dog sat");
    const double s1 = peft::rouge_n(cand, {r1}, 1);
    const double s2 = peft::rouge_n(cand, {r2}, 1);
    EXPECT_EQ(peft::rouge_n(cand, {r1, r2}, 1), (s1 + s2) / 2.0);
    EXPECT_EQ(s2, 1.0 / 3.0);
}

TEST(RougeN, ShortReferencesAreSkippedNotAveraged) {
    const Tokens cand = tok("a b");
    EXPECT_EQ(peft::rouge_n(cand, {tok("a"), tok("a b")}, 2), 1.0);
}

TEST(RougeN, UndefinedAndErrorCases) {
    EXPECT_THROW(peft::rouge_n(tok("a b"), {tok("a")}, 2), peft::UndefinedMetricError);
    EXPECT_THROW(peft::rouge_n(tok("a b"), {}, 1), peft::UndefinedMetricError);
    EXPECT_THROW(peft::rouge_n(tok("a b"), {tok("a b")}, 0), peft::ShapeError);
    EXPECT_EQ(peft::rouge_n(tok("a"), {tok("a b")}, 2), 0.0);
}

TEST(RougeN, MatchesBruteForceOracle) {
    peft::Rng rng(2024);
    std::size_t compared = 0;
    for (int trial = 0; trial < 800; ++trial) {
        const Tokens cand = random_tokens(rng, 8, 4);
        std::vector<Tokens> refs;
        const std::size_t nrefs = 1 + rng.next_u64() % 3;
        for (std::size_t i = 0; i < nrefs; ++i) {
            refs.push_back(random_tokens(rng, 8, 4));
        }
        const std::size_t n = 1 + rng.next_u64() % 3;
        bool any_defined = false;
        for (const auto& r : refs) {
            any_defined = any_defined || r.size() >= n;
        }
        if (!any_defined) {
            EXPECT_THROW(peft::rouge_n(cand, refs, n), peft::UndefinedMetricError);
            continue;
        }
        EXPECT_EQ(peft::rouge_n(cand, refs, n), oracle_rouge_n(cand, refs, n))
            << "trial " << trial;
        ++compared;
    }
    EXPECT_GT(compared, 400u);
}

TEST(RougeL, WorkedExamplesAndEdges) {
    EXPECT_EQ(peft::rouge_l(tok("a c b"), tok("a b c")), 2.0 / 3.0);
    EXPECT_EQ(peft::rouge_l(tok("a b c"), tok("a b c")), 1.0);
    EXPECT_EQ(peft::rouge_l(Tokens{}, tok("a b")), 0.0);
    EXPECT_THROW(peft::rouge_l(tok("a"), Tokens{}), peft::UndefinedMetricError);
}

TEST(RougeL, CandidateInsertionsNeverLowerRecall) {
    peft::Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const Tokens ref = random_tokens(rng, 6, 3);
        if (ref.empty()) {
            continue;
        }
        Tokens cand = random_tokens(rng, 6, 3);
        const double before = peft::rouge_l(cand, ref);
        const std::size_t at = rng.next_u64() % (cand.size() + 1);
        cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(at),
                    std::string(1, static_cast<char>('a' + rng.next_u64() % 3)));
        EXPECT_GE(peft::rouge_l(cand, ref), before) << "trial " << trial;
    }
}

TEST(RougeS, WorkedExamplesAndEdges) {
    EXPECT_EQ(peft::rouge_s(tok("a c"), tok("a b c")), 1.0 / 3.0);
    EXPECT_EQ(peft::rouge_s(tok("a b c"), tok("a b c")), 1.0);
    EXPECT_EQ(peft::rouge_s(Tokens{}, tok("a b")), 0.0);
    EXPECT_THROW(peft::rouge_s(tok("a b"), tok("a")), peft::UndefinedMetricError);
}

TEST(RougeS, CountsAllGapWidths) {
    // Reference pairs: (a,b), (a,a), (b,a); candidate "a ... a" matches (a,a)
    // despite the distance between the tokens.
    EXPECT_EQ(peft::rouge_s(tok("a x y z a"), tok("a b a")), 1.0 / 3.0);
}

TEST(Wer, SubstitutionWorkedExample) {
    const WerBreakdown b = peft::wer(tok("a b c"), tok("a x c"));
    EXPECT_EQ(b.substitutions, 1u);
    EXPECT_EQ(b.deletions, 0u);
    EXPECT_EQ(b.insertions, 0u);
    EXPECT_EQ(b.matches, 2u);
    EXPECT_EQ(b.wer, 1.0 / 3.0);
}

TEST(Wer, RateCanExceedOne) {
    const WerBreakdown b = peft::wer(tok("a"), tok("a b c"));
    EXPECT_EQ(b.insertions, 2u);
    EXPECT_EQ(b.substitutions, 0u);
    EXPECT_EQ(b.matches, 1u);
    EXPECT_EQ(b.wer, 2.0);
}

TEST(Wer, PerfectAndEmptyHypothesis) {
    const WerBreakdown perfect = peft::wer(tok("a b c"), tok("a b c"));
    EXPECT_EQ(perfect.total_edits(), 0u);
    EXPECT_EQ(perfect.wer, 0.0);

    const WerBreakdown empty = peft::wer(tok("a b c"), Tokens{});
    EXPECT_EQ(empty.deletions, 3u);
    EXPECT_EQ(empty.wer, 1.0);

    EXPECT_THROW(peft::wer(Tokens{}, tok("a")), peft::UndefinedMetricError);
}

TEST(Wer, TieBreaksPreferSubstitutionOverDeleteInsert) {
    const WerBreakdown b = peft::wer(tok("a b"), tok("b a"));
    EXPECT_EQ(b.total_edits(), 2u);
    EXPECT_EQ(b.substitutions, 2u);
    EXPECT_EQ(b.deletions, 0u);
    EXPECT_EQ(b.insertions, 0u);
}

TEST(Wer, MatchesMemoizedRecursiveOracle) {
    peft::Rng rng(4079);
    for (int trial = 0; trial < 800; ++trial) {
        const Tokens ref = random_tokens(rng, 8, 3);
        const Tokens hyp = random_tokens(rng, 8, 3);
        if (ref.empty()) {
            EXPECT_THROW(peft::wer(ref, hyp), peft::UndefinedMetricError);
            continue;
        }
        const WerBreakdown b = peft::wer(ref, hyp);
        const std::size_t expected = oracle_lev(ref, hyp);
        EXPECT_EQ(b.total_edits(), expected) << "trial " << trial;
        EXPECT_EQ(b.wer, static_cast<double>(expected) / static_cast<double>(ref.size()));
        EXPECT_EQ(b.matches + b.substitutions + b.deletions, ref.size());
        EXPECT_EQ(b.matches + b.substitutions + b.insertions, hyp.size());
    }
}

} // namespace
