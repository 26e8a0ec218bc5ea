#pragma once
// Topic-aware short-term memory: accumulates topic segments until the token
// threshold triggers summarization into LTM-ready memory entries.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightmem/backends.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/metering.hpp"
#include "lightmem/prompts.hpp"
#include "lightmem/segmentation.hpp"

namespace lightmem {

struct MemoryEntry {
    std::string entry_id;
    std::string topic_id;
    std::string summary;
    std::vector<float> embedding; // unit norm
    std::string user_text;        // original (uncompressed) user turns
    std::string model_text;       // original (uncompressed) assistant turns
    std::uint64_t timestamp = 0;  // logical instant, assigned at creation
};

class StmBuffer {
public:
    explicit StmBuffer(std::uint64_t threshold) : threshold_(threshold) {}

    // Appends the segment; returns true when the buffer should flush
    // (token_count >= threshold after the admit; threshold 0 always flushes).
    bool admit(TopicSegment segment) {
        if (segment.turns.empty()) throw EmptyInput("stm admit: empty segment");
        token_count_ += segment.token_count;
        segments_.push_back(std::move(segment));
        return token_count_ >= threshold_;
    }

    bool empty() const { return segments_.empty(); }
    std::size_t size() const { return segments_.size(); }
    std::uint64_t token_count() const { return token_count_; }
    std::uint64_t threshold() const { return threshold_; }
    const std::vector<TopicSegment>& segments() const { return segments_; }

    std::vector<TopicSegment> take_all() {
        std::vector<TopicSegment> out = std::move(segments_);
        segments_.clear();
        token_count_ = 0;
        return out;
    }

private:
    std::vector<TopicSegment> segments_;
    std::uint64_t token_count_ = 0;
    std::uint64_t threshold_;
};

struct SummaryContext {
    const PromptSet* prompts = nullptr;
    // session_id -> human-readable date, rendered into the segment headers
    const std::map<std::string, std::string>* session_dates = nullptr;
};

namespace detail {

inline std::string format_segment_block(std::size_t index, const TopicSegment& seg,
                                        const std::map<std::string, std::string>* dates) {
    std::ostringstream os;
    const std::string& session = seg.turns.front().turn.session_id;
    std::string date = "?";
    if (dates) {
        const auto it = dates->find(session);
        if (it != dates->end() && !it->second.empty()) date = it->second;
    }
    os << prompt_markers::kSegmentHeaderPrefix << (index + 1) << " | topic " << seg.topic_id << " | session "
       << session << " | " << date << "]\n";
    for (const auto& bt : seg.turns) {
        if (!bt.user.text.empty()) os << "USER: " << bt.user.text << '\n';
        if (!bt.assistant.text.empty()) os << "ASSISTANT: " << bt.assistant.text << '\n';
    }
    return os.str();
}

// The summarizer reply must be a JSON array with one string per segment;
// tolerate surrounding prose by extracting the outermost bracketed span.
inline std::vector<std::string> parse_summary_array(const std::string& reply, std::size_t expected) {
    const auto open = reply.find('[');
    const auto close = reply.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw BackendError("summarizer reply is not a JSON array");
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(reply.substr(open, close - open + 1));
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("summarizer reply is not valid JSON: ") + e.what());
    }
    if (!arr.is_array() || arr.size() != expected)
        throw BackendError("summarizer returned " + std::to_string(arr.size()) + " summaries for " +
                           std::to_string(expected) + " segments");
    std::vector<std::string> out;
    out.reserve(expected);
    for (const auto& item : arr) {
        if (!item.is_string()) throw BackendError("summarizer array item is not a string");
        out.push_back(item.get<std::string>());
    }
    return out;
}

} // namespace detail

inline std::string build_summary_prompt(const std::vector<TopicSegment>& segments, const SummaryContext& ctx) {
    const PromptSet& prompts = ctx.prompts ? *ctx.prompts : PromptSet::defaults();
    std::string blocks;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        blocks += detail::format_segment_block(i, segments[i], ctx.session_dates);
        blocks += '\n';
    }
    return fill_prompt(prompts.summary_template, {{"segments", blocks}});
}

// Summarizes every buffered segment with a single summarizer call and turns
// each segment into one memory entry. A backend failure leaves the buffer
// intact so the flush can be retried.
inline std::vector<MemoryEntry> flush_stm(StmBuffer& buffer, ChatModel& summarizer, Embedder& embedder,
                                          UsageMeter& meter, Clock& clock, std::uint64_t& entry_counter,
                                          std::uint64_t& timestamp_counter, const SummaryContext& ctx = {}) {
    if (buffer.empty()) throw EmptyInput("flush_stm: buffer is empty");
    const std::vector<TopicSegment>& segments = buffer.segments();

    const std::string prompt = build_summary_prompt(segments, ctx);
    const std::uint64_t t0 = clock.now_ms();
    ChatResult result;
    try {
        result = summarizer.complete(prompt);
    } catch (const std::exception& e) {
        throw BackendError(std::string("summary call failed: ") + e.what());
    }
    meter.record(Phase::Summary, result.input_tokens, result.output_tokens, clock.now_ms() - t0);

    const std::vector<std::string> summaries = detail::parse_summary_array(result.text, segments.size());

    std::vector<MemoryEntry> entries;
    entries.reserve(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        MemoryEntry e;
        e.entry_id = "e" + std::to_string(entry_counter++);
        e.topic_id = segments[i].topic_id;
        e.summary = summaries[i];
        e.embedding = embedder.embed(e.summary);
        for (const auto& bt : segments[i].turns) {
            if (!bt.turn.user_text.empty()) {
                if (!e.user_text.empty()) e.user_text += '\n';
                e.user_text += bt.turn.user_text;
            }
            if (!bt.turn.assistant_text.empty()) {
                if (!e.model_text.empty()) e.model_text += '\n';
                e.model_text += bt.turn.assistant_text;
            }
        }
        e.timestamp = ++timestamp_counter;
        entries.push_back(std::move(e));
    }
    buffer.take_all();
    return entries;
}

} // namespace lightmem
