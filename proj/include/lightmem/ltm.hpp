#pragma once
// Long-term memory: append-only store with soft inserts, timestamp-
// constrained update queues, offline parallel consolidation, and exact
// cosine retrieval.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lightmem/backends.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/metering.hpp"
#include "lightmem/prompts.hpp"
#include "lightmem/stm.hpp"

namespace lightmem {

class LtmStore {
public:
    // Online phase: inserts only, never in-place edits or deletes.
    void soft_insert(MemoryEntry entry) {
        if (index_.count(entry.entry_id)) throw DuplicateId("entry id already present: " + entry.entry_id);
        index_[entry.entry_id] = entries_.size();
        entries_.push_back(std::move(entry));
    }

    const MemoryEntry* find(const std::string& entry_id) const {
        const auto it = index_.find(entry_id);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    std::uint64_t generation() const { return generation_; }
    const std::vector<MemoryEntry>& entries() const { return entries_; }

    // Consolidation-only access; targets are disjoint across update queues.
    MemoryEntry& entry_for_update(std::size_t pos) { return entries_[pos]; }
    std::size_t position_of(const std::string& entry_id) const {
        const auto it = index_.find(entry_id);
        if (it == index_.end()) throw Error("unknown entry id: " + entry_id);
        return it->second;
    }
    void bump_generation() { ++generation_; }
    void set_generation(std::uint64_t g) { generation_ = g; }

    // Canonical dump used for equality checks: records in insertion order
    // plus the exact embedding bytes.
    std::string serialize_canonical() const;

    void save(const std::filesystem::path& dir) const;
    static LtmStore load(const std::filesystem::path& dir);

private:
    std::vector<MemoryEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t generation_ = 0;
};

struct QueueSource {
    std::string source_id;
    double similarity = 0.0;
};

// Q(e_i): newer-or-equal-timestamp entries most similar to the target,
// top-k selected then truncated to length n.
struct UpdateQueue {
    std::string target_id;
    std::vector<QueueSource> sources; // sorted by similarity descending
};

inline nlohmann::json entry_record_json(const MemoryEntry& e) {
    return nlohmann::json{{"entry_id", e.entry_id},   {"topic_id", e.topic_id},
                          {"summary", e.summary},     {"user_text", e.user_text},
                          {"model_text", e.model_text}, {"timestamp", e.timestamp}};
}

inline std::string LtmStore::serialize_canonical() const {
    std::ostringstream os;
    os << "generation=" << generation_ << '\n';
    for (const auto& e : entries_) {
        os << entry_record_json(e).dump() << '\n';
        os << std::hex;
        for (float f : e.embedding) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            os << bits << ' ';
        }
        os << std::dec << '\n';
    }
    return os.str();
}

// Builds one update queue per entry. Candidates are the other entries with
// timestamp >= the target's; ties break by (similarity desc, source
// timestamp asc, source id asc).
inline std::vector<UpdateQueue> build_update_queues(const LtmStore& store, std::size_t k, std::size_t n) {
    const auto& entries = store.entries();
    std::vector<UpdateQueue> queues;
    queues.reserve(entries.size());
    for (const auto& target : entries) {
        UpdateQueue q;
        q.target_id = target.entry_id;
        std::vector<std::pair<QueueSource, const MemoryEntry*>> candidates;
        for (const auto& other : entries) {
            if (&other == &target) continue;
            if (other.timestamp < target.timestamp) continue;
            candidates.push_back({{other.entry_id, cosine(target.embedding, other.embedding)}, &other});
        }
        std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
            if (a.first.similarity != b.first.similarity) return a.first.similarity > b.first.similarity;
            if (a.second->timestamp != b.second->timestamp) return a.second->timestamp < b.second->timestamp;
            return a.first.source_id < b.first.source_id;
        });
        const std::size_t keep = std::min({candidates.size(), k, n});
        for (std::size_t i = 0; i < keep; ++i) q.sources.push_back(candidates[i].first);
        queues.push_back(std::move(q));
    }
    return queues;
}

struct ConsolidateOptions {
    bool parallel = true;
    std::size_t workers = 0; // 0 = hardware concurrency
    const PromptSet* prompts = nullptr;
};

struct ConsolidateFailure {
    std::string target_id;
    std::string message;
};

struct ConsolidateReport {
    std::size_t updated = 0;
    std::size_t skipped_empty = 0;
    std::vector<ConsolidateFailure> failures;
};

inline std::string build_update_prompt(const MemoryEntry& target, const std::vector<QueueSource>& sources,
                                       const std::unordered_map<std::string, const MemoryEntry*>& snapshot,
                                       const PromptSet& prompts) {
    std::string source_lines;
    for (const auto& s : sources) {
        const auto it = snapshot.find(s.source_id);
        if (it == snapshot.end()) continue;
        source_lines += prompt_markers::kMemoryEntryPrefix;
        source_lines += std::to_string(it->second->timestamp);
        source_lines += "] ";
        source_lines += it->second->summary;
        source_lines += '\n';
    }
    return fill_prompt(prompts.update_template, {{"target_ts", std::to_string(target.timestamp)},
                                                 {"target", target.summary},
                                                 {"sources", source_lines}});
}

// Executes every non-empty queue: one updater call per queue, reading target
// and source summaries from an immutable pre-pass snapshot and writing only
// its own target. The result is therefore independent of scheduling order.
// A failed queue leaves its target unchanged and is reported; the pass
// continues. Increments the store generation.
inline ConsolidateReport consolidate(LtmStore& store, const std::vector<UpdateQueue>& queues, ChatModel& updater,
                                     Embedder& embedder, UsageMeter& meter, Clock& clock,
                                     const ConsolidateOptions& options = {}) {
    const PromptSet& prompts = options.prompts ? *options.prompts : PromptSet::defaults();

    // snapshot of the pre-pass entries; updater inputs come from here only
    const std::vector<MemoryEntry> snapshot_entries = store.entries();
    std::unordered_map<std::string, const MemoryEntry*> snapshot;
    snapshot.reserve(snapshot_entries.size());
    for (const auto& e : snapshot_entries) snapshot[e.entry_id] = &e;

    struct Job {
        const UpdateQueue* queue;
        std::size_t store_pos;
    };
    std::vector<Job> jobs;
    ConsolidateReport report;
    for (const auto& q : queues) {
        if (q.sources.empty()) {
            ++report.skipped_empty;
            continue;
        }
        jobs.push_back({&q, store.position_of(q.target_id)});
    }

    std::mutex report_mu;
    auto run_job = [&](const Job& job) {
        const auto target_it = snapshot.find(job.queue->target_id);
        if (target_it == snapshot.end()) {
            std::lock_guard<std::mutex> lock(report_mu);
            report.failures.push_back({job.queue->target_id, "target missing from snapshot"});
            return;
        }
        const MemoryEntry& target = *target_it->second;
        const std::string prompt = build_update_prompt(target, job.queue->sources, snapshot, prompts);
        const std::uint64_t t0 = clock.now_ms();
        ChatResult result;
        try {
            result = updater.complete(prompt);
        } catch (const std::exception& e) {
            meter.record(Phase::Update, whitespace_token_count(prompt), 0, clock.now_ms() - t0);
            std::lock_guard<std::mutex> lock(report_mu);
            report.failures.push_back({job.queue->target_id, e.what()});
            return;
        }
        meter.record(Phase::Update, result.input_tokens, result.output_tokens, clock.now_ms() - t0);
        MemoryEntry& slot = store.entry_for_update(job.store_pos);
        slot.summary = result.text;
        slot.embedding = embedder.embed(slot.summary);
        std::lock_guard<std::mutex> lock(report_mu);
        ++report.updated;
    };

    if (options.parallel && jobs.size() > 1) {
        const std::size_t hw = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
        const std::size_t workers = std::min(hw, jobs.size());
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) run_job(jobs[i]);
            });
        for (auto& t : pool) t.join();
    } else {
        for (const auto& job : jobs) run_job(job);
    }

    store.bump_generation();
    return report;
}

// Exact cosine scan; ties break toward the newer timestamp, then entry id.
inline std::vector<MemoryEntry> retrieve(const LtmStore& store, const std::string& query, Embedder& embedder,
                                         std::size_t top_k) {
    if (top_k == 0) throw RangeError("retrieve: top_k must be positive");
    if (store.empty()) throw EmptyStore("retrieve: store is empty");
    const std::vector<float> qv = embedder.embed(query);
    struct Ranked {
        double sim;
        const MemoryEntry* entry;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(store.size());
    for (const auto& e : store.entries()) ranked.push_back({cosine(qv, e.embedding), &e});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.entry->timestamp != b.entry->timestamp) return a.entry->timestamp > b.entry->timestamp;
        return a.entry->entry_id < b.entry->entry_id;
    });
    std::vector<MemoryEntry> out;
    for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) out.push_back(*ranked[i].entry);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: one JSON record per line, embeddings as little-endian float32
// arrays in a sidecar file keyed by entry id, and a manifest naming the
// active generation. Each save writes a new generation and atomically swaps
// the manifest pointer.

namespace detail {

static_assert(std::endian::native == std::endian::little, "embedding files are little-endian");

inline std::string generation_stem(std::uint64_t g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "gen-%06llu", static_cast<unsigned long long>(g));
    return buf;
}

} // namespace detail

inline void LtmStore::save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string stem = detail::generation_stem(generation_);
    const fs::path records_path = dir / (stem + ".jsonl");
    const fs::path emb_path = dir / (stem + ".emb");

    {
        std::ofstream records(records_path, std::ios::trunc);
        if (!records) throw Error("cannot write " + records_path.string());
        for (const auto& e : entries_) records << entry_record_json(e).dump() << '\n';
    }
    {
        std::ofstream emb(emb_path, std::ios::trunc | std::ios::binary);
        if (!emb) throw Error("cannot write " + emb_path.string());
        emb.write("LMEM", 4);
        auto put_u32 = [&emb](std::uint32_t v) { emb.write(reinterpret_cast<const char*>(&v), 4); };
        put_u32(1); // format version
        put_u32(static_cast<std::uint32_t>(entries_.size()));
        for (const auto& e : entries_) {
            put_u32(static_cast<std::uint32_t>(e.entry_id.size()));
            emb.write(e.entry_id.data(), static_cast<std::streamsize>(e.entry_id.size()));
            put_u32(static_cast<std::uint32_t>(e.embedding.size()));
            emb.write(reinterpret_cast<const char*>(e.embedding.data()),
                      static_cast<std::streamsize>(e.embedding.size() * sizeof(float)));
        }
    }

    const nlohmann::json manifest{{"generation", generation_},
                                  {"records", stem + ".jsonl"},
                                  {"embeddings", stem + ".emb"}};
    const fs::path tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << manifest.dump(2) << '\n';
    }
    fs::rename(tmp, dir / "manifest.json");
}

inline LtmStore LtmStore::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest_in(dir / "manifest.json");
    if (!manifest_in) throw ParseError("no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest_in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad manifest: ") + e.what());
    }

    LtmStore store;
    store.set_generation(manifest.at("generation").get<std::uint64_t>());

    std::unordered_map<std::string, std::vector<float>> embeddings;
    {
        std::ifstream emb(dir / manifest.at("embeddings").get<std::string>(), std::ios::binary);
        if (!emb) throw ParseError("missing embeddings file");
        char magic[4];
        emb.read(magic, 4);
        if (std::string(magic, 4) != "LMEM") throw ParseError("bad embeddings file magic");
        auto get_u32 = [&emb]() {
            std::uint32_t v = 0;
            emb.read(reinterpret_cast<char*>(&v), 4);
            if (!emb) throw ParseError("truncated embeddings file");
            return v;
        };
        if (get_u32() != 1) throw ParseError("unsupported embeddings file version");
        const std::uint32_t count = get_u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t id_len = get_u32();
            std::string id(id_len, '\0');
            emb.read(id.data(), id_len);
            const std::uint32_t dim = get_u32();
            std::vector<float> v(dim);
            emb.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)));
            if (!emb) throw ParseError("truncated embeddings file");
            embeddings[id] = std::move(v);
        }
    }

    std::ifstream records(dir / manifest.at("records").get<std::string>());
    if (!records) throw ParseError("missing records file");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(records, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("record line " + std::to_string(lineno) + ": " + e.what());
        }
        MemoryEntry e;
        e.entry_id = rec.at("entry_id").get<std::string>();
        e.topic_id = rec.at("topic_id").get<std::string>();
        e.summary = rec.at("summary").get<std::string>();
        e.user_text = rec.at("user_text").get<std::string>();
        e.model_text = rec.at("model_text").get<std::string>();
        e.timestamp = rec.at("timestamp").get<std::uint64_t>();
        const auto it = embeddings.find(e.entry_id);
        if (it == embeddings.end()) throw ParseError("no embedding for entry " + e.entry_id);
        e.embedding = it->second;
        store.soft_insert(std::move(e));
    }
    return store;
}

} // namespace lightmem
