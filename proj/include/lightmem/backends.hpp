#pragma once
// Model backend interfaces plus the deterministic mock implementations used
// by tests and the CLI's offline mode. Mocks are pure functions of
// (input, seed).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lightmem/core.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/prompts.hpp"

namespace lightmem {

// ---------------------------------------------------------------------------
// Small deterministic hashing / text utilities shared by the mocks.

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

// Incremental FNV-style hash with a splitmix finalizer; stable across runs
// and platforms.
struct StableHash {
    std::uint64_t state = 1469598103934665603ull;

    StableHash& feed(std::string_view s) {
        for (unsigned char c : s) {
            state ^= c;
            state *= 1099511628211ull;
        }
        state = detail::mix64(state);
        return *this;
    }

    StableHash& feed(std::uint64_t v) {
        state ^= detail::mix64(v);
        state *= 1099511628211ull;
        state = detail::mix64(state);
        return *this;
    }

    std::uint64_t value() const { return state; }

    // Uniform in [0, 1) using the top 53 bits.
    double unit() const { return static_cast<double>(state >> 11) * (1.0 / 9007199254740992.0); }
};

inline std::vector<std::string> whitespace_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::uint64_t whitespace_token_count(std::string_view text) {
    std::uint64_t n = 0;
    bool in_tok = false;
    for (char c : text) {
        const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_tok) ++n;
        in_tok = !ws;
    }
    return n;
}

inline bool utf8_valid(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len;
        if (b0 < 0x80) {
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            if (b0 < 0xC2) return false; // overlong
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            if (b0 > 0xF4) return false; // beyond U+10FFFF
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k)
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
        if (len == 3 && b0 == 0xE0 && static_cast<unsigned char>(s[i + 1]) < 0xA0) return false;
        if (len == 3 && b0 == 0xED && static_cast<unsigned char>(s[i + 1]) >= 0xA0) return false; // surrogates
        if (len == 4 && b0 == 0xF0 && static_cast<unsigned char>(s[i + 1]) < 0x90) return false;
        if (len == 4 && b0 == 0xF4 && static_cast<unsigned char>(s[i + 1]) >= 0x90) return false;
        i += len;
    }
    return true;
}

// A decode failure upstream typically surfaces as invalid bytes or as the
// U+FFFD replacement character embedded in otherwise valid text.
inline bool text_decodable(std::string_view s) {
    return utf8_valid(s) && s.find("\xEF\xBF\xBD") == std::string_view::npos;
}

// ---------------------------------------------------------------------------
// Clocks. Pipelines time backend calls through this interface so that mock
// runs can use a deterministic logical clock.

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::uint64_t now_ms() = 0;
};

class SteadyClock final : public Clock {
public:
    std::uint64_t now_ms() override {
        const auto d = std::chrono::steady_clock::now() - start_;
        return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(d).count());
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Advances one tick per query; durations become a deterministic function of
// the call sequence.
class LogicalClock final : public Clock {
public:
    std::uint64_t now_ms() override { return ticks_.fetch_add(1, std::memory_order_relaxed) + 1; }

private:
    std::atomic<std::uint64_t> ticks_{0};
};

// ---------------------------------------------------------------------------
// Interfaces.

// Per-layer token-level attention over a packed sentence sequence.
struct TokenAttention {
    std::vector<std::string> tokens;
    std::vector<std::pair<std::size_t, std::size_t>> spans; // [begin, end) per sentence
    std::vector<Matrix> layers;                             // one TxT matrix per requested layer
};

class TokenScorer {
public:
    virtual ~TokenScorer() = default;
    // Throws ScorerError when the input cannot be decoded by the backend.
    virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
    // Retention probabilities, one per token of tokenize(text), each in [0,1].
    virtual std::vector<double> retention_scores(const std::string& text) = 0;
    virtual std::size_t context_window() const = 0;
    virtual bool supports_attention() const { return false; }
    virtual TokenAttention attention(const std::vector<std::string>& sentences, const std::vector<int>& layers) {
        (void)sentences;
        (void)layers;
        throw UnsupportedBackend("token scorer does not expose attention");
    }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    // Returns a unit-norm vector of dimension() entries.
    virtual std::vector<float> embed(const std::string& text) = 0;
};

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw EmbedderError("embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

struct ChatResult {
    std::string text;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
};

class ChatModel {
public:
    virtual ~ChatModel() = default;
    virtual ChatResult complete(const std::string& prompt) = 0;
    virtual bool supports_logprobs() const { return false; }
    // Per-token log P(x_i | x_<i) for the given text under the model.
    virtual std::vector<TokenLogprob> prompt_logprobs(const std::string& text) {
        (void)text;
        throw UnsupportedBackend("backend does not expose per-token log-probabilities");
    }
};

// ---------------------------------------------------------------------------
// Mock token scorer.

// Overrides the mock's random attention with sentence-level weights that
// produce sub-diagonal peaks exactly at `peaks` (global sentence indices).
// A sentence's global index is read from its first token of the form
// t<digits>; sentences without an anchor fall back to their window-local
// index. Non-peak sub-diagonal values follow a slow global ramp so that no
// spurious local maximum appears inside any window.
struct PlantedAttentionProfile {
    std::vector<std::size_t> peaks;
    double peak_value = 0.9;
    double base_lo = 0.1;
    double base_hi = 0.5;
    std::size_t corpus_sentences = 200;
};

class MockScorer : public TokenScorer {
public:
    explicit MockScorer(std::uint64_t seed = 0, std::size_t context_window = std::size_t{1} << 20)
        : seed_(seed), window_(context_window) {}

    void set_planted_profile(PlantedAttentionProfile profile) { profile_ = std::move(profile); }
    void clear_planted_profile() { profile_.reset(); }

    std::vector<std::string> tokenize(const std::string& text) const override {
        if (!text_decodable(text)) throw ScorerError("undecodable input: corrupted characters");
        return whitespace_tokenize(text);
    }

    std::vector<double> retention_scores(const std::string& text) override {
        const auto tokens = tokenize(text);
        std::vector<double> scores;
        scores.reserve(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            // planted profiles key sentences by their t<digits> anchor, so
            // the anchor must survive compression at any ratio
            if (profile_ && is_anchor_token(tokens[i]))
                scores.push_back(1.0);
            else
                scores.push_back(StableHash{}.feed(seed_).feed("retain").feed(tokens[i]).feed(i).unit());
        }
        return scores;
    }

    std::size_t context_window() const override { return window_; }

    bool supports_attention() const override { return true; }

    TokenAttention attention(const std::vector<std::string>& sentences, const std::vector<int>& layers) override {
        TokenAttention out;
        out.spans.reserve(sentences.size());
        for (const auto& s : sentences) {
            auto toks = tokenize(s);
            const std::size_t begin = out.tokens.size();
            out.tokens.insert(out.tokens.end(), toks.begin(), toks.end());
            out.spans.emplace_back(begin, out.tokens.size());
        }
        const std::size_t t = out.tokens.size();
        if (profile_) {
            const Matrix weights = planted_weights(sentences);
            Matrix a(t, t);
            for (std::size_t k = 0; k < sentences.size(); ++k)
                for (std::size_t j = 0; j <= k; ++j) {
                    const double w = (j == k) ? 0.01 : weights.at(k, j);
                    for (std::size_t q = out.spans[k].first; q < out.spans[k].second; ++q)
                        for (std::size_t key = out.spans[j].first; key < out.spans[j].second && key <= q; ++key)
                            a.at(q, key) = w;
                }
            out.layers.assign(layers.size(), a);
        } else {
            for (int layer : layers) {
                Matrix a(t, t);
                for (std::size_t q = 0; q < t; ++q)
                    for (std::size_t key = 0; key <= q; ++key)
                        a.at(q, key) = StableHash{}
                                           .feed(seed_)
                                           .feed("attn")
                                           .feed(static_cast<std::uint64_t>(layer))
                                           .feed(out.tokens[q])
                                           .feed(out.tokens[key])
                                           .feed(q)
                                           .feed(key)
                                           .unit();
                out.layers.push_back(std::move(a));
            }
        }
        return out;
    }

    static bool is_anchor_token(const std::string& tok) {
        if (tok.size() < 2 || tok[0] != 't') return false;
        for (std::size_t i = 1; i < tok.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
        return true;
    }

    // Global index carried by a "t<digits>" anchor token, if any.
    static std::optional<std::size_t> anchor_index(const std::string& sentence) {
        for (const auto& tok : whitespace_tokenize(sentence))
            if (is_anchor_token(tok)) return std::stoull(tok.substr(1));
        return std::nullopt;
    }

private:
    double planted_subdiagonal(std::size_t global_idx) const {
        const auto& p = *profile_;
        if (std::find(p.peaks.begin(), p.peaks.end(), global_idx) != p.peaks.end()) return p.peak_value;
        const double frac =
            p.corpus_sentences ? std::min(1.0, static_cast<double>(global_idx) / p.corpus_sentences) : 0.0;
        return p.base_lo + (p.base_hi - p.base_lo) * frac;
    }

    // Sentence-level weight rows that survive sink masking and row
    // normalization with their sub-diagonal intact: rows k >= 3 place no
    // mass on sentence 0 (whose leading tokens get masked).
    Matrix planted_weights(const std::vector<std::string>& sentences) const {
        const std::size_t n = sentences.size();
        Matrix w(n, n);
        std::vector<std::size_t> global(n);
        for (std::size_t k = 0; k < n; ++k) global[k] = anchor_index(sentences[k]).value_or(k);
        if (n >= 2) w.at(1, 0) = 1.0;
        for (std::size_t k = 2; k < n; ++k) {
            const double d = planted_subdiagonal(global[k]);
            w.at(k, k - 1) = d;
            if (k == 2) {
                w.at(2, 0) = 1.0 - d;
            } else {
                const double rest = (1.0 - d) / static_cast<double>(k - 2);
                for (std::size_t j = 1; j + 1 < k; ++j) w.at(k, j) = rest;
            }
        }
        return w;
    }

    std::uint64_t seed_;
    std::size_t window_;
    std::optional<PlantedAttentionProfile> profile_;
};

// ---------------------------------------------------------------------------
// Feature-hashing embedder: bag of tokens projected onto `dimension` buckets,
// L2-normalized. Deterministic; empty text maps to the first basis vector.

class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0) : dim_(dimension), seed_(seed) {
        if (dim_ < 2) throw RangeError("embedder dimension must be >= 2");
    }

    std::size_t dimension() const override { return dim_; }

    std::size_t bucket_of(const std::string& token) const {
        return static_cast<std::size_t>(StableHash{}.feed(seed_).feed("bucket").feed(token).value() % dim_);
    }

    std::vector<float> embed(const std::string& text) override {
        std::vector<float> v(dim_, 0.0f);
        const auto tokens = whitespace_tokenize(text);
        if (tokens.empty()) {
            v[0] = 1.0f;
            return v;
        }
        for (const auto& tok : tokens) v[bucket_of(tok)] += 1.0f;
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        norm = std::sqrt(norm);
        for (float& x : v) x = static_cast<float>(x / norm);
        return v;
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Mock language model exposing per-token log-probabilities. Tokens listed in
// `probabilities` use their assigned probability; all others are uniform over
// a vocabulary of `vocab_size` entries.

class MockLogprobLm : public ChatModel {
public:
    explicit MockLogprobLm(std::size_t vocab_size = 1000) : vocab_size_(vocab_size) {}

    void set_probability(std::string token, double p) { probabilities_[std::move(token)] = p; }

    ChatResult complete(const std::string& prompt) override {
        return {prompt, whitespace_token_count(prompt), whitespace_token_count(prompt)};
    }

    bool supports_logprobs() const override { return true; }

    std::vector<TokenLogprob> prompt_logprobs(const std::string& text) override {
        std::vector<TokenLogprob> out;
        for (const auto& tok : whitespace_tokenize(text)) {
            const auto it = probabilities_.find(tok);
            const double p = it != probabilities_.end() ? it->second : 1.0 / static_cast<double>(vocab_size_);
            out.push_back({tok, std::log(p)});
        }
        return out;
    }

private:
    std::size_t vocab_size_;
    std::map<std::string, double> probabilities_;
};

// ---------------------------------------------------------------------------
// Deterministic mock chat model. Dispatches on the structural markers of the
// built-in prompt templates so one instance can serve as summarizer, updater,
// QA answerer, and judge in offline runs.

class MockChat : public ChatModel {
public:
    enum class UpdateStyle { Merge, Identity };
    enum class JudgeStyle { Faithful, AlwaysYes, AlwaysNo, Unparseable };

    explicit MockChat(std::uint64_t seed = 0) : seed_(seed) {}

    void set_update_style(UpdateStyle s) { update_style_ = s; }
    void set_judge_style(JudgeStyle s) { judge_style_ = s; }

    ChatResult complete(const std::string& prompt) override {
        std::string reply;
        if (prompt.find(prompt_markers::kSegmentHeaderPrefix) != std::string::npos &&
            prompt.find("JSON array") != std::string::npos) {
            reply = summarize(prompt);
        } else if (prompt.find(prompt_markers::kNewerNotes) != std::string::npos &&
                   prompt.find(prompt_markers::kTargetNote) != std::string::npos) {
            reply = update(prompt);
        } else if (prompt.find(prompt_markers::kJudgeSuffix) != std::string::npos ||
                   prompt.find("Answer yes or no only") != std::string::npos) {
            reply = judge(prompt);
        } else {
            reply = answer(prompt);
        }
        return {reply, whitespace_token_count(prompt), whitespace_token_count(reply)};
    }

private:
    static std::vector<std::string> lines_of(const std::string& text) {
        std::vector<std::string> lines;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) lines.push_back(line);
        return lines;
    }

    static std::string first_tokens(const std::string& text, std::size_t count) {
        const auto toks = whitespace_tokenize(text);
        std::string out;
        for (std::size_t i = 0; i < toks.size() && i < count; ++i) {
            if (i) out += ' ';
            out += toks[i];
        }
        return out;
    }

    static std::string lowercase(std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }

    // One "SUMMARY: <first 10 tokens>" entry per segment block, as a JSON array.
    std::string summarize(const std::string& prompt) const {
        std::vector<std::string> bodies;
        std::string cur;
        bool in_block = false;
        for (const auto& line : lines_of(prompt)) {
            if (line.rfind(prompt_markers::kSegmentHeaderPrefix, 0) == 0) {
                if (in_block) bodies.push_back(cur);
                cur.clear();
                in_block = true;
            } else if (in_block) {
                cur += line;
                cur += ' ';
            }
        }
        if (in_block) bodies.push_back(cur);
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& body : bodies) arr.push_back("SUMMARY: " + first_tokens(body, 10));
        return arr.dump();
    }

    std::string update(const std::string& prompt) const {
        const auto lines = lines_of(prompt);
        std::string target;
        std::vector<std::string> sources;
        enum { Scan, Target, Sources } state = Scan;
        for (const auto& line : lines) {
            if (line.rfind(prompt_markers::kTargetNote, 0) == 0) {
                state = Target;
                continue;
            }
            if (line.rfind(prompt_markers::kNewerNotes, 0) == 0) {
                state = Sources;
                continue;
            }
            if (state == Target) {
                if (!line.empty()) {
                    if (!target.empty()) target += ' ';
                    target += line;
                }
            } else if (state == Sources) {
                if (line.rfind(prompt_markers::kMemoryEntryPrefix, 0) == 0) {
                    const auto close = line.find("] ");
                    sources.push_back(close == std::string::npos ? line : line.substr(close + 2));
                }
            }
        }
        if (update_style_ == UpdateStyle::Identity) return target;
        std::string merged = target;
        for (const auto& s : sources) {
            merged += ' ';
            merged += s;
        }
        return merged;
    }

    std::string judge(const std::string& prompt) const {
        switch (judge_style_) {
            case JudgeStyle::AlwaysYes: return "yes";
            case JudgeStyle::AlwaysNo: return "no";
            case JudgeStyle::Unparseable: return "maybe";
            case JudgeStyle::Faithful: break;
        }
        std::string gold, response;
        for (const auto& line : lines_of(prompt)) {
            for (const char* prefix : {"Correct Answer: ", "Rubric: ", "Explanation: "})
                if (line.rfind(prefix, 0) == 0) gold = line.substr(std::string(prefix).size());
            if (line.rfind("Model Response: ", 0) == 0) response = line.substr(16);
        }
        if (gold.empty()) return "no";
        return lowercase(response).find(lowercase(gold)) != std::string::npos ? "yes" : "no";
    }

    // Echo the top retrieved entry's text; without context, abstain.
    std::string answer(const std::string& prompt) const {
        for (const auto& line : lines_of(prompt)) {
            if (line.rfind(prompt_markers::kMemoryEntryPrefix, 0) == 0) {
                const auto close = line.find("] ");
                if (close != std::string::npos) return line.substr(close + 2);
            }
        }
        return "I do not have that information in memory.";
    }

    std::uint64_t seed_;
    UpdateStyle update_style_ = UpdateStyle::Merge;
    JudgeStyle judge_style_ = JudgeStyle::Faithful;
};

// Fixed-reply chat model for unit tests.
class ScriptedChat : public ChatModel {
public:
    explicit ScriptedChat(std::string reply) : reply_(std::move(reply)) {}

    ChatResult complete(const std::string& prompt) override {
        return {reply_, whitespace_token_count(prompt), whitespace_token_count(reply_)};
    }

private:
    std::string reply_;
};

// Always-failing chat model for retry-safety tests.
class FailingChat : public ChatModel {
public:
    ChatResult complete(const std::string&) override { throw BackendError("injected backend failure"); }
};

} // namespace lightmem
