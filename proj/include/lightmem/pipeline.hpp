#pragma once
// Pipeline driver: incremental turn feeding through compression, the sensory
// buffer, topic segmentation, STM summarization, and LTM soft inserts.
// Turns are processed strictly one at a time with no lookahead.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lightmem/backends.hpp"
#include "lightmem/core.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/ltm.hpp"
#include "lightmem/metering.hpp"
#include "lightmem/prompts.hpp"
#include "lightmem/segmentation.hpp"
#include "lightmem/sensory.hpp"
#include "lightmem/stm.hpp"

namespace lightmem {

struct PipelineBackends {
    TokenScorer* scorer = nullptr;
    Embedder* embedder = nullptr;
    ChatModel* summarizer = nullptr;
    ChatModel* updater = nullptr; // optional; needed only for consolidation
    Clock* clock = nullptr;
};

// Compresses one side of a turn at retention fraction r, then applies the
// repeated-halving fallback if the result still overflows the scorer window.
inline CompressedText compress_turn_text(const std::string& text, double r, TokenScorer& scorer,
                                         double fallback_ratio) {
    ScoredTokens scored = score_tokens(text, scorer);
    CompressedText out = compress(scored, r, text);
    const std::size_t limit = scorer.context_window();
    if (out.token_count() > limit) {
        CompressedText fitted = compress_to_fit(out.text, limit, scorer, fallback_ratio);
        std::vector<std::size_t> mapped;
        mapped.reserve(fitted.kept_indices.size());
        for (std::size_t local : fitted.kept_indices) mapped.push_back(out.kept_indices[local]);
        fitted.kept_indices = std::move(mapped);
        fitted.original_token_count = out.original_token_count;
        out = std::move(fitted);
    }
    return out;
}

class LightMemPipeline {
public:
    LightMemPipeline(PipelineConfig cfg, PipelineBackends backends, BoundaryMode mode = BoundaryMode::Hybrid,
                     const PromptSet* prompts = nullptr)
        : cfg_(validate_config(cfg)),
          backends_(backends),
          mode_(mode),
          prompts_(prompts ? prompts : &PromptSet::defaults()),
          sensory_(cfg_.sensory_buffer_capacity),
          stm_(cfg_.stm_threshold) {
        if (!backends_.scorer || !backends_.embedder || !backends_.summarizer || !backends_.clock)
            throw Error("pipeline requires scorer, embedder, summarizer, and clock backends");
    }

    void register_session(const std::string& session_id, const std::string& date) {
        if (!date.empty()) session_dates_[session_id] = date;
    }

    void feed_turn(const Turn& turn) {
        if (turn.user_text.empty() && turn.assistant_text.empty())
            throw EmptyInput("turn " + std::to_string(turn.turn_id) + " has neither user nor assistant text");
        Turn t = turn;
        ++turns_fed_;
        if (t.timestamp == 0) t.timestamp = turns_fed_;

        BufferedTurn bt;
        bt.turn = std::move(t);
        bt.user = compress_side(bt.turn.user_text);
        bt.assistant = compress_side(bt.turn.assistant_text);
        sensory_.admit(std::move(bt));

        if (sensory_.at_capacity()) run_segmentation(false);
    }

    // End-of-stream: force the sensory buffer and the STM through so no turn
    // is lost.
    void finish() {
        if (!sensory_.empty()) run_segmentation(true);
        if (!stm_.empty()) flush_stm_now();
    }

    ConsolidateReport consolidate(bool parallel = true, std::size_t workers = 0) {
        if (!backends_.updater) throw Error("pipeline has no updater backend");
        const auto queues =
            build_update_queues(ltm_, static_cast<std::size_t>(cfg_.queue_topk),
                                static_cast<std::size_t>(cfg_.queue_length));
        ConsolidateOptions opts;
        opts.parallel = parallel;
        opts.workers = workers;
        opts.prompts = prompts_;
        return lightmem::consolidate(ltm_, queues, *backends_.updater, *backends_.embedder, meter_,
                                     *backends_.clock, opts);
    }

    const PipelineConfig& config() const { return cfg_; }
    LtmStore& store() { return ltm_; }
    const LtmStore& store() const { return ltm_; }
    UsageMeter& meter() { return meter_; }
    const UsageMeter& meter() const { return meter_; }
    std::uint64_t turns_fed() const { return turns_fed_; }
    const std::vector<std::uint64_t>& predicted_boundaries() const { return predicted_boundaries_; }

    void set_collect_traces(bool on) { collect_traces_ = on; }
    const std::vector<SegmentationTrace>& traces() const { return traces_; }

private:
    CompressedText compress_side(const std::string& text) {
        if (text.empty()) return {};
        return compress_turn_text(text, cfg_.compression_ratio, *backends_.scorer, cfg_.fallback_ratio);
    }

    void run_segmentation(bool forced) {
        SegmentationTrace trace;
        SegmentationOutcome outcome = segment_buffer(sensory_, *backends_.scorer, *backends_.embedder, cfg_,
                                                     forced, mode_, &topic_counter_,
                                                     collect_traces_ ? &trace : nullptr);
        if (collect_traces_) traces_.push_back(std::move(trace));
        for (std::uint64_t id : outcome.detected_boundary_turns) predicted_boundaries_.push_back(id);
        for (auto& seg : outcome.segments) {
            const bool flush_needed = stm_.admit(std::move(seg));
            if (flush_needed) flush_stm_now();
        }
    }

    void flush_stm_now() {
        SummaryContext ctx;
        ctx.prompts = prompts_;
        ctx.session_dates = &session_dates_;
        auto entries = flush_stm(stm_, *backends_.summarizer, *backends_.embedder, meter_, *backends_.clock,
                                 entry_counter_, timestamp_counter_, ctx);
        for (auto& e : entries) ltm_.soft_insert(std::move(e));
    }

    PipelineConfig cfg_;
    PipelineBackends backends_;
    BoundaryMode mode_;
    const PromptSet* prompts_;
    SensoryBuffer sensory_;
    StmBuffer stm_;
    LtmStore ltm_;
    UsageMeter meter_;
    std::map<std::string, std::string> session_dates_;
    std::uint64_t topic_counter_ = 0;
    std::uint64_t entry_counter_ = 0;
    std::uint64_t timestamp_counter_ = 0;
    std::uint64_t turns_fed_ = 0;
    bool collect_traces_ = false;
    std::vector<SegmentationTrace> traces_;
    std::vector<std::uint64_t> predicted_boundaries_;
};

} // namespace lightmem
