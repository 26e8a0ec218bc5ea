#include <catch2/catch_amalgamated.hpp>

#include "lightmem/stm.hpp"

using namespace lightmem;

namespace {

TopicSegment make_segment(const std::string& topic, std::size_t token_count, std::uint64_t first_turn = 0) {
    TopicSegment seg;
    seg.topic_id = topic;
    seg.token_count = token_count;
    BufferedTurn bt;
    bt.turn.turn_id = first_turn;
    bt.turn.session_id = "s0";
    bt.turn.user_text = "user words for " + topic;
    bt.turn.assistant_text = "assistant words for " + topic;
    bt.user.text = "user words " + topic;
    bt.user.kept_indices = {0, 1, 2};
    bt.user.original_token_count = 4;
    bt.assistant.text = "assistant words " + topic;
    bt.assistant.kept_indices = {0, 1, 2};
    bt.assistant.original_token_count = 4;
    seg.turns.push_back(std::move(bt));
    return seg;
}

struct FlushRig {
    MockChat summarizer;
    HashEmbedder embedder{64};
    UsageMeter meter;
    LogicalClock clock;
    std::uint64_t entries = 0;
    std::uint64_t timestamps = 0;

    std::vector<MemoryEntry> flush(StmBuffer& buf) {
        return flush_stm(buf, summarizer, embedder, meter, clock, entries, timestamps);
    }
};

} // namespace

TEST_CASE("admit below threshold does not flush") {
    StmBuffer buf(256);
    REQUIRE_FALSE(buf.admit(make_segment("t0", 100)));
    REQUIRE(buf.token_count() == 100);
}

TEST_CASE("admit crossing the threshold flushes") {
    StmBuffer buf(256);
    REQUIRE_FALSE(buf.admit(make_segment("t0", 200)));
    REQUIRE(buf.admit(make_segment("t1", 100))); // 300 >= 256
}

TEST_CASE("threshold zero flushes after every admit") {
    StmBuffer buf(0);
    REQUIRE(buf.admit(make_segment("t0", 1)));
    REQUIRE(buf.admit(make_segment("t1", 50)));
}

TEST_CASE("empty segments are rejected") {
    StmBuffer buf(10);
    TopicSegment empty;
    empty.topic_id = "t0";
    REQUIRE_THROWS_AS(buf.admit(empty), EmptyInput);
}

TEST_CASE("flush yields one entry per segment from a single batched call") {
    StmBuffer buf(0);
    buf.admit(make_segment("t0", 10, 0));
    buf.admit(make_segment("t1", 10, 1));
    buf.admit(make_segment("t2", 10, 2));
    FlushRig rig;
    const auto entries = rig.flush(buf);
    REQUIRE(entries.size() == 3);
    REQUIRE(buf.empty());
    // segments are summarized jointly: one summarizer call per flush
    REQUIRE(rig.meter.calls(Phase::Summary) == 1);
    REQUIRE(rig.meter.snapshot().of(Phase::Summary).input_tokens > 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        REQUIRE(entries[i].topic_id == "t" + std::to_string(i));
        REQUIRE(entries[i].summary.rfind("SUMMARY:", 0) == 0);
        REQUIRE_FALSE(entries[i].embedding.empty());
        REQUIRE_FALSE(entries[i].user_text.empty());
        REQUIRE_FALSE(entries[i].model_text.empty());
    }
}

TEST_CASE("mock summaries are reproducible across runs") {
    auto run = [] {
        StmBuffer buf(0);
        buf.admit(make_segment("t0", 10));
        FlushRig rig;
        return rig.flush(buf)[0].summary;
    };
    REQUIRE(run() == run());
}

TEST_CASE("failed flush leaves the buffer intact and is retryable") {
    StmBuffer buf(0);
    buf.admit(make_segment("t0", 10));
    buf.admit(make_segment("t1", 10));

    FailingChat failing;
    HashEmbedder embedder(64);
    UsageMeter meter;
    LogicalClock clock;
    std::uint64_t entries = 0, timestamps = 0;
    REQUIRE_THROWS_AS(flush_stm(buf, failing, embedder, meter, clock, entries, timestamps), BackendError);
    REQUIRE(buf.size() == 2); // untouched

    FlushRig rig;
    const auto out = rig.flush(buf);
    REQUIRE(out.size() == 2);
    REQUIRE(buf.empty());
}

TEST_CASE("a summarizer reply with the wrong arity is a backend error") {
    StmBuffer buf(0);
    buf.admit(make_segment("t0", 10));
    buf.admit(make_segment("t1", 10));
    ScriptedChat wrong("[\"only one summary\"]");
    HashEmbedder embedder(64);
    UsageMeter meter;
    LogicalClock clock;
    std::uint64_t entries = 0, timestamps = 0;
    REQUIRE_THROWS_AS(flush_stm(buf, wrong, embedder, meter, clock, entries, timestamps), BackendError);
    REQUIRE(buf.size() == 2);
}

TEST_CASE("timestamps increase strictly across consecutive flushes") {
    FlushRig rig;
    StmBuffer buf(0);
    std::vector<std::uint64_t> stamps;
    for (int round = 0; round < 3; ++round) {
        buf.admit(make_segment("t" + std::to_string(round), 10));
        for (const auto& e : rig.flush(buf)) stamps.push_back(e.timestamp);
    }
    REQUIRE(stamps.size() == 3);
    REQUIRE(std::is_sorted(stamps.begin(), stamps.end()));
    REQUIRE(std::adjacent_find(stamps.begin(), stamps.end()) == stamps.end()); // strict
}

TEST_CASE("token accounting is conserved across admits and flushes") {
    FlushRig rig;
    StmBuffer buf(1000);
    std::uint64_t admitted = 0;
    for (int i = 0; i < 5; ++i) {
        const std::size_t tokens = 100 + 50 * i;
        admitted += tokens;
        buf.admit(make_segment("t" + std::to_string(i), tokens));
    }
    REQUIRE(buf.token_count() == admitted); // pending
    rig.flush(buf);
    REQUIRE(buf.token_count() == 0); // all flushed
}

TEST_CASE("entry ids are fresh across flushes") {
    FlushRig rig;
    StmBuffer buf(0);
    buf.admit(make_segment("t0", 5));
    const auto first = rig.flush(buf);
    buf.admit(make_segment("t1", 5));
    const auto second = rig.flush(buf);
    REQUIRE(first[0].entry_id != second[0].entry_id);
}

TEST_CASE("segment blocks carry session dates when provided") {
    std::map<std::string, std::string> dates{{"s0", "2023/05/20 (Sat) 02:21"}};
    SummaryContext ctx;
    ctx.session_dates = &dates;
    const auto prompt = build_summary_prompt({make_segment("t9", 5)}, ctx);
    REQUIRE(prompt.find("2023/05/20") != std::string::npos);
    REQUIRE(prompt.find("topic t9") != std::string::npos);
}
