#pragma once
// Sensory buffer maintenance and hybrid topic segmentation: attention-based
// boundaries intersected with similarity-based boundaries, with residual
// carry-over between buffers.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightmem/backends.hpp"
#include "lightmem/core.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/sensory.hpp"

namespace lightmem {

// Sentence-level attention. Causal: values[k][j] is nonzero only for j < k;
// every row k >= 1 is normalized to sum to 1 over its strict predecessors.
struct AttentionMatrix {
    std::size_t n = 0;
    Matrix values;

    std::vector<double> sub_diagonal() const {
        std::vector<double> d;
        for (std::size_t k = 1; k < n; ++k) d.push_back(values.at(k, k - 1));
        return d;
    }
};

enum class BoundaryKind { Attention, Similarity, Hybrid };

// A boundary at position k means a new segment starts at sentence k.
struct BoundarySet {
    BoundaryKind kind = BoundaryKind::Hybrid;
    std::vector<std::size_t> positions; // sorted, subset of {1, .., n-1}
};

enum class BoundaryMode { Attention, Similarity, Hybrid };

// Builds the sentence-level attention matrix from token-level backend
// attention: token pairs are averaged per sentence pair, layers are averaged,
// contributions of the first/last sink_mask_width tokens of the packed
// sequence are zeroed, and each row is normalized over its predecessors.
inline AttentionMatrix build_attention_matrix(const std::vector<std::string>& sentences, TokenScorer& scorer,
                                              const std::vector<int>& layers, std::size_t sink_mask_width) {
    const std::size_t n = sentences.size();
    if (n == 0) throw EmptyInput("build_attention_matrix: no sentences");
    AttentionMatrix out;
    out.n = n;
    out.values = Matrix(n, n);
    if (n == 1) return out;
    if (!scorer.supports_attention())
        throw UnsupportedBackend("build_attention_matrix: scorer does not expose attention");

    const TokenAttention att = scorer.attention(sentences, layers);
    const std::size_t t = att.tokens.size();
    if (att.spans.size() != n) throw ScorerError("attention spans do not match sentence count");
    if (att.layers.empty()) throw ScorerError("attention backend returned no layers");
    for (const auto& layer : att.layers)
        if (layer.rows != t || layer.cols != t) throw ScorerError("attention matrix shape mismatch");

    // masking everything would zero the matrix; skip the mask when the
    // packed sequence is shorter than both sink regions
    const bool mask_enabled = t > 2 * sink_mask_width;
    auto masked = [&](std::size_t pos) {
        return mask_enabled && (pos < sink_mask_width || pos >= t - sink_mask_width);
    };

    Matrix sums(n, n);
    for (const auto& layer : att.layers) {
        for (std::size_t k = 1; k < n; ++k) {
            const auto [qb, qe] = att.spans[k];
            for (std::size_t j = 0; j < k; ++j) {
                const auto [kb, ke] = att.spans[j];
                const std::size_t pairs = (qe - qb) * (ke - kb);
                if (pairs == 0) continue;
                double acc = 0.0;
                for (std::size_t q = qb; q < qe; ++q)
                    for (std::size_t key = kb; key < ke; ++key)
                        if (!masked(key)) acc += layer.at(q, key);
                sums.at(k, j) += acc / static_cast<double>(pairs);
            }
        }
    }

    const double layer_count = static_cast<double>(att.layers.size());
    for (std::size_t k = 1; k < n; ++k) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            sums.at(k, j) /= layer_count;
            row += sums.at(k, j);
        }
        if (row > 0.0) {
            for (std::size_t j = 0; j < k; ++j) out.values.at(k, j) = sums.at(k, j) / row;
        } else {
            for (std::size_t j = 0; j < k; ++j) out.values.at(k, j) = 1.0 / static_cast<double>(k);
        }
    }
    return out;
}

// Local maxima of the sub-diagonal sequence d[k] = M[k][k-1]: boundary at k
// when d[k] > d[k-1] and d[k] > d[k+1]. Both comparisons must be in range,
// which confines k to [2, n-2].
inline BoundarySet attention_boundaries(const AttentionMatrix& m) {
    BoundarySet out{BoundaryKind::Attention, {}};
    const std::size_t n = m.n;
    if (n < 4) return out;
    for (std::size_t k = 2; k + 1 < n; ++k) {
        const double dk = m.values.at(k, k - 1);
        if (dk > m.values.at(k - 1, k - 2) && dk > m.values.at(k + 1, k)) out.positions.push_back(k);
    }
    return out;
}

inline BoundarySet similarity_boundaries(const std::vector<std::string>& sentences, Embedder& embedder,
                                         double tau_sim) {
    if (sentences.empty()) throw EmptyInput("similarity_boundaries: no sentences");
    BoundarySet out{BoundaryKind::Similarity, {}};
    std::vector<std::vector<float>> vecs;
    vecs.reserve(sentences.size());
    for (const auto& s : sentences) vecs.push_back(embedder.embed(s));
    for (std::size_t k = 1; k < sentences.size(); ++k)
        if (cosine(vecs[k - 1], vecs[k]) < tau_sim) out.positions.push_back(k);
    return out;
}

inline BoundarySet intersect_boundaries(const BoundarySet& attention, const BoundarySet& similarity) {
    BoundarySet out{BoundaryKind::Hybrid, {}};
    std::set_intersection(attention.positions.begin(), attention.positions.end(), similarity.positions.begin(),
                          similarity.positions.end(), std::back_inserter(out.positions));
    return out;
}

// One buffered turn: the raw turn plus its compressed sides. Only the user
// sentence feeds segmentation; when the user side is empty the compressed
// assistant text stands in so the buffer math stays well formed.
struct BufferedTurn {
    Turn turn;
    CompressedText user;
    CompressedText assistant;

    const CompressedText& sentence() const { return user.text.empty() ? assistant : user; }
    std::size_t summary_token_count() const { return user.token_count() + assistant.token_count(); }
};

struct TopicSegment {
    std::string topic_id;
    std::vector<BufferedTurn> turns;  // non-empty, contiguous in ingestion order
    std::size_t token_count = 0;      // compressed tokens feeding the summarizer
};

class SensoryBuffer {
public:
    explicit SensoryBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw RangeError("sensory buffer capacity must be positive");
    }

    void admit(BufferedTurn bt) {
        token_count_ += bt.sentence().token_count();
        pending_.push_back(std::move(bt));
    }

    bool empty() const { return pending_.empty(); }
    std::size_t size() const { return pending_.size(); }
    std::size_t token_count() const { return token_count_; }
    std::size_t capacity() const { return capacity_; }
    bool at_capacity() const { return token_count_ >= capacity_; }
    const std::vector<BufferedTurn>& pending() const { return pending_; }

    // Removes the first `count` turns (consumed into segments), keeping the
    // trailing fragment as the residual.
    void consume_front(std::size_t count) {
        std::size_t removed = 0;
        for (std::size_t i = 0; i < count && i < pending_.size(); ++i)
            removed += pending_[i].sentence().token_count();
        pending_.erase(pending_.begin(), pending_.begin() + std::min(count, pending_.size()));
        token_count_ -= removed;
    }

private:
    std::vector<BufferedTurn> pending_;
    std::size_t token_count_ = 0;
    std::size_t capacity_;
};

// Debug dump of one segmentation pass (matrix, boundary sets, cut decision).
struct SegmentationTrace {
    std::vector<std::uint64_t> turn_ids;
    std::size_t n = 0;
    bool forced = false;
    Matrix matrix;
    std::vector<double> sub_diagonal;
    std::vector<std::size_t> attention_positions;
    std::vector<std::size_t> similarity_positions;
    std::vector<std::size_t> hybrid_positions;

    nlohmann::json to_json() const {
        nlohmann::json m = nlohmann::json::array();
        for (std::size_t r = 0; r < matrix.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < matrix.cols; ++c) row.push_back(matrix.at(r, c));
            m.push_back(std::move(row));
        }
        return nlohmann::json{{"turn_ids", turn_ids},
                              {"n", n},
                              {"forced", forced},
                              {"attention_matrix", std::move(m)},
                              {"sub_diagonal", sub_diagonal},
                              {"b1", attention_positions},
                              {"b2", similarity_positions},
                              {"b", hybrid_positions}};
    }
};

struct SegmentationOutcome {
    std::vector<TopicSegment> segments;
    // Turn ids at which a *detected* boundary started a new segment. Forced
    // cuts (end-of-stream, hard cap) are not boundary predictions.
    std::vector<std::uint64_t> detected_boundary_turns;
};

// Cuts the buffer at the hybrid (or single-granularity) boundaries. Segments
// before the last boundary are emitted; the trailing fragment stays in the
// buffer as the residual, except under `forced` where it is emitted too.
// With no boundary found: forced emits the whole buffer as one segment;
// otherwise everything stays residual until the 2x-capacity hard cap forces
// a single-segment cut.
inline SegmentationOutcome segment_buffer(SensoryBuffer& buffer, TokenScorer& scorer, Embedder& embedder,
                                          const PipelineConfig& cfg, bool forced,
                                          BoundaryMode mode = BoundaryMode::Hybrid,
                                          std::uint64_t* topic_counter = nullptr,
                                          SegmentationTrace* trace = nullptr) {
    SegmentationOutcome out;
    if (buffer.empty()) return out;

    const auto& pending = buffer.pending();
    const std::size_t n = pending.size();
    std::vector<std::string> sentences;
    sentences.reserve(n);
    for (const auto& bt : pending) sentences.push_back(bt.sentence().text);

    BoundarySet b1{BoundaryKind::Attention, {}};
    BoundarySet b2{BoundaryKind::Similarity, {}};
    AttentionMatrix m;
    if (mode != BoundaryMode::Similarity) {
        m = build_attention_matrix(sentences, scorer, cfg.attention_layers, cfg.sink_mask_width);
        b1 = attention_boundaries(m);
    }
    if (mode != BoundaryMode::Attention) b2 = similarity_boundaries(sentences, embedder, cfg.similarity_threshold);

    BoundarySet chosen;
    switch (mode) {
        case BoundaryMode::Attention: chosen = b1; break;
        case BoundaryMode::Similarity: chosen = b2; break;
        case BoundaryMode::Hybrid: chosen = intersect_boundaries(b1, b2); break;
    }

    if (trace) {
        trace->turn_ids.clear();
        for (const auto& bt : pending) trace->turn_ids.push_back(bt.turn.turn_id);
        trace->n = n;
        trace->forced = forced;
        trace->matrix = m.values;
        trace->sub_diagonal = m.sub_diagonal();
        trace->attention_positions = b1.positions;
        trace->similarity_positions = b2.positions;
        trace->hybrid_positions = chosen.positions;
    }

    auto next_topic_id = [topic_counter]() {
        static std::uint64_t fallback = 0;
        std::uint64_t& c = topic_counter ? *topic_counter : fallback;
        return "t" + std::to_string(c++);
    };
    auto make_segment = [&](std::size_t begin, std::size_t end) {
        TopicSegment seg;
        seg.topic_id = next_topic_id();
        for (std::size_t i = begin; i < end; ++i) {
            seg.token_count += pending[i].summary_token_count();
            seg.turns.push_back(pending[i]);
        }
        return seg;
    };

    if (chosen.positions.empty()) {
        const bool hard_cap = buffer.token_count() >= 2 * cfg.sensory_buffer_capacity;
        if (forced || hard_cap) {
            out.segments.push_back(make_segment(0, n));
            buffer.consume_front(n);
        }
        return out;
    }

    std::size_t begin = 0;
    for (std::size_t cut : chosen.positions) {
        out.segments.push_back(make_segment(begin, cut));
        out.detected_boundary_turns.push_back(pending[cut].turn.turn_id);
        begin = cut;
    }
    if (forced) {
        out.segments.push_back(make_segment(begin, n));
        buffer.consume_front(n);
    } else {
        buffer.consume_front(begin);
    }
    return out;
}

} // namespace lightmem
