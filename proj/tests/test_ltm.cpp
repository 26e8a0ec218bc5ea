#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "lightmem/ltm.hpp"
#include "support/synthetic.hpp"

using namespace lightmem;
using lightmem::testsupport::brute_force_update_queues;
using lightmem::testsupport::random_store;

namespace {

MemoryEntry entry(const std::string& id, std::uint64_t ts, std::vector<float> embedding,
                  const std::string& summary = "") {
    MemoryEntry e;
    e.entry_id = id;
    e.topic_id = "topic_" + id;
    e.summary = summary.empty() ? "summary of " + id : summary;
    e.user_text = "user " + id;
    e.model_text = "model " + id;
    e.timestamp = ts;
    e.embedding = std::move(embedding);
    return e;
}

struct ConsolidateRig {
    HashEmbedder embedder{64};
    UsageMeter meter;
    LogicalClock clock;

    ConsolidateReport run(LtmStore& store, ChatModel& updater, bool parallel) {
        const auto queues = build_update_queues(store, 5, 5);
        ConsolidateOptions opts;
        opts.parallel = parallel;
        return consolidate(store, queues, updater, embedder, meter, clock, opts);
    }
};

} // namespace

TEST_CASE("soft insert grows the store without touching other entries") {
    LtmStore store;
    store.soft_insert(entry("a", 1, {1.0f, 0.0f}));
    REQUIRE(store.size() == 1);
    store.soft_insert(entry("b", 2, {0.0f, 1.0f}));
    REQUIRE(store.size() == 2);
    REQUIRE(store.find("a") != nullptr);
    REQUIRE(store.find("a")->summary == "summary of a");
    REQUIRE(store.find("b")->timestamp == 2);
}

TEST_CASE("duplicate ids are rejected") {
    LtmStore store;
    store.soft_insert(entry("a", 1, {1.0f, 0.0f}));
    REQUIRE_THROWS_AS(store.soft_insert(entry("a", 2, {0.0f, 1.0f})), DuplicateId);
}

TEST_CASE("a thousand inserts cost zero update-phase activity") {
    LtmStore store;
    UsageMeter meter;
    for (int i = 0; i < 1000; ++i)
        store.soft_insert(entry("e" + std::to_string(i), static_cast<std::uint64_t>(i), {1.0f, 0.0f}));
    REQUIRE(store.size() == 1000);
    REQUIRE(meter.calls(Phase::Update) == 0);
}

TEST_CASE("single-entry store yields one empty queue") {
    LtmStore store;
    store.soft_insert(entry("solo", 1, {1.0f, 0.0f}));
    const auto queues = build_update_queues(store, 5, 5);
    REQUIRE(queues.size() == 1);
    REQUIRE(queues[0].target_id == "solo");
    REQUIRE(queues[0].sources.empty());
}

TEST_CASE("three-entry example: later-or-equal timestamps feed earlier targets") {
    // realizable unit vectors: sim(1,2)=0.9, sim(1,3)=0.2, sim(2,3)~0.6066
    const float s19 = std::sqrt(1.0f - 0.81f);
    const float s96 = std::sqrt(1.0f - 0.04f);
    LtmStore store;
    store.soft_insert(entry("e1", 1, {1.0f, 0.0f}));
    store.soft_insert(entry("e2", 2, {0.9f, s19}));
    store.soft_insert(entry("e3", 3, {0.2f, s96}));

    const auto queues = build_update_queues(store, 2, 2);
    REQUIRE(queues.size() == 3);

    REQUIRE(queues[0].target_id == "e1");
    REQUIRE(queues[0].sources.size() == 2);
    REQUIRE(queues[0].sources[0].source_id == "e2");
    REQUIRE(queues[0].sources[0].similarity == Catch::Approx(0.9).margin(1e-6));
    REQUIRE(queues[0].sources[1].source_id == "e3");
    REQUIRE(queues[0].sources[1].similarity == Catch::Approx(0.2).margin(1e-6));

    REQUIRE(queues[1].target_id == "e2");
    REQUIRE(queues[1].sources.size() == 1);
    REQUIRE(queues[1].sources[0].source_id == "e3");

    REQUIRE(queues[2].target_id == "e3");
    REQUIRE(queues[2].sources.empty());

    // agreement with the enumeration oracle
    const auto oracle = brute_force_update_queues(store, 2, 2);
    for (std::size_t i = 0; i < queues.size(); ++i) {
        REQUIRE(queues[i].target_id == oracle[i].target_id);
        REQUIRE(queues[i].sources.size() == oracle[i].sources.size());
        for (std::size_t s = 0; s < queues[i].sources.size(); ++s)
            REQUIRE(queues[i].sources[s].source_id == oracle[i].sources[s].source_id);
    }
}

TEST_CASE("equal timestamps make entries mutually eligible") {
    LtmStore store;
    store.soft_insert(entry("x", 5, {1.0f, 0.0f}));
    store.soft_insert(entry("y", 5, {0.6f, 0.8f}));
    const auto queues = build_update_queues(store, 3, 3);
    REQUIRE(queues[0].sources.size() == 1);
    REQUIRE(queues[0].sources[0].source_id == "y");
    REQUIRE(queues[1].sources.size() == 1);
    REQUIRE(queues[1].sources[0].source_id == "x");
}

TEST_CASE("queues satisfy the temporal and length laws on random stores") {
    std::mt19937_64 rng(808);
    for (int round = 0; round < 20; ++round) {
        const auto store = random_store(rng, 1 + static_cast<std::size_t>(rng() % 30));
        const std::size_t k = 1 + rng() % 6;
        const std::size_t n = 1 + rng() % 6;
        const auto queues = build_update_queues(store, k, n);
        REQUIRE(queues.size() == store.size());
        for (const auto& q : queues) {
            REQUIRE(q.sources.size() <= std::min(k, n));
            const auto* target = store.find(q.target_id);
            for (const auto& s : q.sources) {
                REQUIRE(s.source_id != q.target_id);
                REQUIRE(store.find(s.source_id)->timestamp >= target->timestamp);
            }
            REQUIRE(std::is_sorted(q.sources.begin(), q.sources.end(),
                                   [](const QueueSource& a, const QueueSource& b) {
                                       return a.similarity > b.similarity;
                                   }));
        }
    }
}

TEST_CASE("all-empty queues consolidate to zero calls") {
    LtmStore store;
    store.soft_insert(entry("only", 9, {1.0f, 0.0f}));
    ConsolidateRig rig;
    MockChat updater;
    const auto report = rig.run(store, updater, true);
    REQUIRE(report.updated == 0);
    REQUIRE(report.skipped_empty == 1);
    REQUIRE(rig.meter.calls(Phase::Update) == 0);
    REQUIRE(store.generation() == 1);
    REQUIRE(store.find("only")->summary == "summary of only");
}

TEST_CASE("identity updater leaves content unchanged, one call per non-empty queue") {
    LtmStore store;
    HashEmbedder embedder(64);
    for (int i = 0; i < 4; ++i) {
        auto e = entry("e" + std::to_string(i), static_cast<std::uint64_t>(i), {});
        e.embedding = embedder.embed(e.summary);
        store.soft_insert(std::move(e));
    }
    const std::string before = store.serialize_canonical();

    MockChat updater;
    updater.set_update_style(MockChat::UpdateStyle::Identity);
    ConsolidateRig rig;
    const auto report = rig.run(store, updater, false);

    // e3 is newest so only it has an empty queue
    REQUIRE(report.updated == 3);
    REQUIRE(rig.meter.calls(Phase::Update) == 3);
    const std::string after = store.serialize_canonical();
    // content identical except the generation counter
    REQUIRE(after.substr(after.find('\n')) == before.substr(before.find('\n')));
}

TEST_CASE("parallel and sequential consolidation produce bit-identical stores") {
    std::mt19937_64 rng(4242);
    for (int seed = 0; seed < 5; ++seed) {
        LtmStore a = random_store(rng, 24);
        LtmStore b;
        for (const auto& e : a.entries()) b.soft_insert(e);

        MockChat updater; // merge style
        ConsolidateRig rig_a, rig_b;
        rig_a.run(a, updater, true);
        rig_b.run(b, updater, false);
        REQUIRE(a.serialize_canonical() == b.serialize_canonical());
    }
}

TEST_CASE("a failing queue leaves its target unchanged and the pass continues") {
    // updater that fails only when e1 is the *target* (its summary may still
    // appear among other queues' sources)
    class SelectiveFail : public ChatModel {
    public:
        ChatResult complete(const std::string& prompt) override {
            if (prompt.find("]:\nsummary of e1\n") != std::string::npos) throw BackendError("boom");
            MockChat inner;
            inner.set_update_style(MockChat::UpdateStyle::Identity);
            return inner.complete(prompt);
        }
    } updater;

    LtmStore store;
    HashEmbedder embedder(64);
    for (int i = 0; i < 3; ++i) {
        auto e = entry("e" + std::to_string(i), 1, {});
        e.embedding = embedder.embed(e.summary);
        store.soft_insert(std::move(e));
    }
    ConsolidateRig rig;
    const auto report = rig.run(store, updater, true);
    REQUIRE(report.failures.size() == 1);
    REQUIRE(report.failures[0].target_id == "e1");
    REQUIRE(report.updated == 2);
    REQUIRE(store.find("e1")->summary == "summary of e1");
    REQUIRE(store.generation() == 1);
}

TEST_CASE("retrieve returns the single entry for any query") {
    LtmStore store;
    HashEmbedder embedder(64);
    auto e = entry("solo", 1, {});
    e.embedding = embedder.embed(e.summary);
    store.soft_insert(std::move(e));
    const auto out = retrieve(store, "anything at all", embedder, 3);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].entry_id == "solo");
}

TEST_CASE("querying an entry's own summary ranks it first") {
    LtmStore store;
    HashEmbedder embedder(64);
    for (int i = 0; i < 4; ++i) {
        auto e = entry("e" + std::to_string(i), static_cast<std::uint64_t>(i), {},
                       "distinct note number " + std::to_string(i) + " about subject" + std::to_string(i));
        e.embedding = embedder.embed(e.summary);
        store.soft_insert(std::move(e));
    }
    const auto out = retrieve(store, store.find("e2")->summary, embedder, 2);
    REQUIRE(out[0].entry_id == "e2");
}

TEST_CASE("orthogonal embeddings: the aligned entry wins") {
    // embeddings injected directly; query embedder maps the query onto axis 3
    class AxisEmbedder : public Embedder {
    public:
        std::size_t dimension() const override { return 5; }
        std::vector<float> embed(const std::string&) override {
            std::vector<float> v(5, 0.0f);
            v[3] = 1.0f;
            return v;
        }
    } axis;

    LtmStore store;
    for (int i = 0; i < 5; ++i) {
        std::vector<float> basis(5, 0.0f);
        basis[static_cast<std::size_t>(i)] = 1.0f;
        store.soft_insert(entry("e" + std::to_string(i), static_cast<std::uint64_t>(i), std::move(basis)));
    }
    const auto out = retrieve(store, "query aligned with axis three", axis, 1);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].entry_id == "e3");
}

TEST_CASE("ties break toward the newer timestamp") {
    LtmStore store;
    store.soft_insert(entry("old", 1, {1.0f, 0.0f}));
    store.soft_insert(entry("new", 9, {1.0f, 0.0f}));
    class FixedEmbedder : public Embedder {
    public:
        std::size_t dimension() const override { return 2; }
        std::vector<float> embed(const std::string&) override { return {1.0f, 0.0f}; }
    } fixed;
    const auto out = retrieve(store, "q", fixed, 2);
    REQUIRE(out[0].entry_id == "new");
    REQUIRE(out[1].entry_id == "old");
}

TEST_CASE("retrieval on an empty store raises EmptyStore") {
    LtmStore store;
    HashEmbedder embedder(16);
    REQUIRE_THROWS_AS(retrieve(store, "q", embedder, 1), EmptyStore);
}

TEST_CASE("insert-only online phase: content only grows between consolidations") {
    LtmStore store;
    HashEmbedder embedder(16);
    std::set<std::pair<std::string, std::string>> seen;
    for (int i = 0; i < 8; ++i) {
        auto e = entry("e" + std::to_string(i), static_cast<std::uint64_t>(i), {});
        e.embedding = embedder.embed(e.summary);
        store.soft_insert(std::move(e));
        std::set<std::pair<std::string, std::string>> now;
        for (const auto& it : store.entries()) now.emplace(it.entry_id, it.summary);
        for (const auto& old : seen) REQUIRE(now.count(old) == 1);
        seen = std::move(now);
    }
}

TEST_CASE("store persists and reloads exactly, manifest points at the latest generation") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lightmem_store_test";
    fs::remove_all(dir);

    LtmStore store;
    HashEmbedder embedder(32);
    for (int i = 0; i < 6; ++i) {
        auto e = entry("e" + std::to_string(i), static_cast<std::uint64_t>(i + 1), {});
        e.summary += " with ünïcode and \"quotes\"";
        e.embedding = embedder.embed(e.summary);
        store.soft_insert(std::move(e));
    }
    store.save(dir);
    const LtmStore loaded = LtmStore::load(dir);
    REQUIRE(loaded.serialize_canonical() == store.serialize_canonical());

    // consolidation bumps the generation; a new save swaps the manifest
    MockChat updater;
    ConsolidateRig rig;
    rig.run(store, updater, true);
    store.save(dir);
    const LtmStore reloaded = LtmStore::load(dir);
    REQUIRE(reloaded.generation() == 1);
    REQUIRE(fs::exists(dir / "gen-000000.jsonl")); // previous generation kept
    REQUIRE(fs::exists(dir / "gen-000001.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("soft updates preserve both facts in the travel case") {
    LtmStore store;
    ConsolidateRig rig_for_dims; // embeddings must match the consolidation embedder
    auto& embedder = rig_for_dims.embedder;
    auto tokyo = entry("e_tokyo", 1, {}, "Monday 2 PM: User is planning a trip to Tokyo.");
    tokyo.embedding = embedder.embed(tokyo.summary);
    auto kyoto = entry("e_kyoto", 2, {}, "Monday 4 PM: User asks about trains to Kyoto.");
    kyoto.embedding = embedder.embed(kyoto.summary);
    store.soft_insert(std::move(tokyo));
    store.soft_insert(std::move(kyoto));

    MockChat updater; // merge style: augment, never delete
    ConsolidateRig& rig = rig_for_dims;
    rig.run(store, updater, true);

    const auto tokyo_hits = retrieve(store, "trip to Tokyo", rig.embedder, 1);
    REQUIRE(tokyo_hits[0].summary.find("Tokyo") != std::string::npos);
    const auto kyoto_hits = retrieve(store, "trains to Kyoto", rig.embedder, 1);
    REQUIRE(kyoto_hits[0].summary.find("Kyoto") != std::string::npos);
    // the merged target keeps its own fact and gains the newer one
    REQUIRE(store.find("e_tokyo")->summary.find("Tokyo") != std::string::npos);
    REQUIRE(store.find("e_tokyo")->summary.find("Kyoto") != std::string::npos);
    REQUIRE(store.size() == 2); // nothing deleted
}
