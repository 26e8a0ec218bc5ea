#pragma once
// Pre-compression of raw turn text: score tokens for retention, keep the
// top-r fraction, and apply the overflow fallback before buffering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lightmem/backends.hpp"
#include "lightmem/errors.hpp"

namespace lightmem {

enum class ScoreMode { Classifier, Entropy };

struct ScoredTokens {
    std::vector<std::string> tokens;
    std::vector<double> scores; // parallel to tokens
    ScoreMode mode = ScoreMode::Classifier;
};

struct CompressedText {
    std::string text;
    std::vector<std::size_t> kept_indices; // strictly increasing, original positions
    std::size_t original_token_count = 0;

    std::size_t token_count() const { return kept_indices.size(); }
};

// Number of tokens kept at retention fraction r over n tokens:
// max(1, ceil(r*n)), with products that are integral in exact arithmetic
// snapped to the integer (guards against 0.6*5 = 3.0000000000000004).
inline std::size_t retained_count(double r, std::size_t n) {
    const double x = r * static_cast<double>(n);
    double m = std::ceil(x - 1e-9);
    if (m < 1.0) m = 1.0;
    auto out = static_cast<std::size_t>(m);
    return std::min(out, n);
}

inline ScoredTokens score_tokens(const std::string& text, TokenScorer& scorer) {
    auto tokens = scorer.tokenize(text);
    if (tokens.empty()) throw EmptyInput("score_tokens: text has no tokens");
    auto scores = scorer.retention_scores(text);
    if (scores.size() != tokens.size())
        throw ScorerError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(tokens.size()) + " tokens");
    for (double s : scores)
        if (!(s >= 0.0 && s <= 1.0)) throw ScorerError("retention score outside [0,1]");
    return {std::move(tokens), std::move(scores), ScoreMode::Classifier};
}

// Surprisal scoring: score_i = -log P(x_i | x_<i). Higher surprisal means
// greater informational uniqueness, so those tokens are kept preferentially.
inline ScoredTokens entropy_scores(const std::string& text, ChatModel& lm) {
    if (!lm.supports_logprobs())
        throw UnsupportedBackend("entropy_scores requires per-token log-probabilities");
    const auto lps = lm.prompt_logprobs(text);
    if (lps.empty()) throw EmptyInput("entropy_scores: text has no tokens");
    ScoredTokens out;
    out.mode = ScoreMode::Entropy;
    out.tokens.reserve(lps.size());
    out.scores.reserve(lps.size());
    for (const auto& lp : lps) {
        out.tokens.push_back(lp.token);
        out.scores.push_back(std::max(0.0, -lp.logprob));
    }
    return out;
}

// Keeps the max(1, ceil(r*N)) highest-scored tokens in original order; ties
// break toward earlier positions. At r=1 the original text is returned
// verbatim.
inline CompressedText compress(const ScoredTokens& scored, double r, const std::string& original_text) {
    if (!(r > 0.0) || r > 1.0) throw RangeError("compression_ratio must be in (0, 1]");
    const std::size_t n = scored.tokens.size();
    if (n == 0) throw EmptyInput("compress: empty token sequence");
    if (scored.scores.size() != n) throw ScorerError("compress: token/score length mismatch");

    const std::size_t m = retained_count(r, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // stable sort on descending score keeps earlier positions first on ties
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scored.scores[a] > scored.scores[b]; });
    order.resize(m);
    std::sort(order.begin(), order.end());

    CompressedText out;
    out.kept_indices = std::move(order);
    out.original_token_count = n;
    if (m == n) {
        out.text = original_text;
    } else {
        for (std::size_t i = 0; i < out.kept_indices.size(); ++i) {
            if (i) out.text += ' ';
            out.text += scored.tokens[out.kept_indices[i]];
        }
    }
    return out;
}

// Repeatedly compresses at `fallback_ratio` until the text fits in `limit`
// tokens. kept_indices stay expressed against the original token positions.
inline CompressedText compress_to_fit(const std::string& text, std::size_t limit, TokenScorer& scorer,
                                      double fallback_ratio = 0.5) {
    if (limit == 0) throw RangeError("compress_to_fit: limit must be positive");
    const auto original = scorer.tokenize(text);
    if (original.empty()) throw EmptyInput("compress_to_fit: text has no tokens");

    CompressedText cur;
    cur.text = text;
    cur.original_token_count = original.size();
    cur.kept_indices.resize(original.size());
    std::iota(cur.kept_indices.begin(), cur.kept_indices.end(), 0);

    std::size_t count = original.size();
    while (count > limit) {
        ScoredTokens scored = score_tokens(cur.text, scorer);
        if (scored.tokens.size() != cur.kept_indices.size())
            throw ScorerError("compress_to_fit: tokenizer is not stable under detokenization");
        CompressedText next = compress(scored, fallback_ratio, cur.text);
        std::vector<std::size_t> mapped;
        mapped.reserve(next.kept_indices.size());
        for (std::size_t local : next.kept_indices) mapped.push_back(cur.kept_indices[local]);
        const std::size_t next_count = scorer.tokenize(next.text).size();
        if (next_count >= count)
            throw NonConvergence("compress_to_fit: a single unit exceeds the token limit");
        cur.text = std::move(next.text);
        cur.kept_indices = std::move(mapped);
        count = next_count;
    }
    return cur;
}

} // namespace lightmem
