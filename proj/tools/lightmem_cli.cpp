// Command-line harness: ingest, consolidate, qa, eval, segeval, sweep, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lightmem/lightmem.hpp"

namespace fs = std::filesystem;
using namespace lightmem;

namespace {

struct BackendBundle {
    std::unique_ptr<TokenScorer> scorer;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<ChatModel> chat;
    std::unique_ptr<ChatModel> judge;
    std::unique_ptr<ChatModel> updater;
    std::unique_ptr<Clock> clock;

    PipelineBackends pipeline() {
        PipelineBackends b;
        b.scorer = scorer.get();
        b.embedder = embedder.get();
        b.summarizer = chat.get();
        b.updater = updater.get();
        b.clock = clock.get();
        return b;
    }
};

struct CommonFlags {
    std::string config_path;
    std::string backend = "mock";
    std::string scorer = "";      // defaults to the backend family
    std::string clock = "";       // "logical" or "steady"; default per backend
    std::uint64_t seed = 0;
    std::string mode = "hybrid";
    std::string prompts_dir;

    // config overrides (only applied when the flag was given)
    double r = 0.0;
    std::uint64_t th = 0;
    std::uint64_t capacity = 0;
    double tau = 0.0;
    std::uint64_t topk = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "flat key=value config file");
    cmd->add_option("--backend", f.backend, "mock | openai")->check(CLI::IsMember({"mock", "openai"}));
    cmd->add_option("--scorer", f.scorer, "mock | http");
    cmd->add_option("--clock", f.clock, "logical | steady");
    cmd->add_option("--seed", f.seed, "seed for the mock backends");
    cmd->add_option("--mode", f.mode, "boundary mode: hybrid | attention | similarity")
        ->check(CLI::IsMember({"hybrid", "attention", "similarity"}));
    cmd->add_option("--prompts", f.prompts_dir, "directory of prompt template overrides");
    cmd->add_option("--r", f.r, "compression ratio override (retention fraction)");
    cmd->add_option("--th", f.th, "STM threshold override (tokens)");
    cmd->add_option("--capacity", f.capacity, "sensory buffer capacity override");
    cmd->add_option("--tau", f.tau, "similarity threshold override");
    cmd->add_option("--topk", f.topk, "retrieval top-k override");
}

PipelineConfig make_config(const CLI::App* cmd, const CommonFlags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = load_config_file(f.config_path);
    if (cmd->count("--r")) cfg.compression_ratio = f.r;
    if (cmd->count("--th")) cfg.stm_threshold = f.th;
    if (cmd->count("--capacity")) cfg.sensory_buffer_capacity = f.capacity;
    if (cmd->count("--tau")) cfg.similarity_threshold = f.tau;
    if (cmd->count("--topk")) cfg.retrieval_topk = f.topk;
    return validate_config(cfg);
}

BoundaryMode parse_mode(const std::string& mode) {
    if (mode == "attention") return BoundaryMode::Attention;
    if (mode == "similarity") return BoundaryMode::Similarity;
    return BoundaryMode::Hybrid;
}

BackendBundle make_backends(const CommonFlags& f) {
    BackendBundle b;
    const std::string scorer_kind = f.scorer.empty() ? (f.backend == "mock" ? "mock" : "http") : f.scorer;
    if (scorer_kind == "http")
        b.scorer = HttpTokenScorer::from_env();
    else
        b.scorer = std::make_unique<MockScorer>(f.seed);
    if (f.backend == "openai") {
        b.embedder = OpenAiEmbedder::from_env();
        b.chat = OpenAiChatModel::from_env("CHAT");
        const char* judge_url = std::getenv("LIGHTMEM_JUDGE_URL");
        b.judge = judge_url && *judge_url ? OpenAiChatModel::from_env("JUDGE") : nullptr;
        b.updater = OpenAiChatModel::from_env("CHAT");
    } else {
        b.embedder = std::make_unique<HashEmbedder>(256, f.seed);
        b.chat = std::make_unique<MockChat>(f.seed);
        b.updater = std::make_unique<MockChat>(f.seed);
    }
    const std::string clock_kind = f.clock.empty() ? (f.backend == "mock" ? "logical" : "steady") : f.clock;
    if (clock_kind == "steady")
        b.clock = std::make_unique<SteadyClock>();
    else
        b.clock = std::make_unique<LogicalClock>();
    return b;
}

PromptSet load_prompts(const CommonFlags& f) {
    return f.prompts_dir.empty() ? PromptSet::defaults() : PromptSet::load_dir(f.prompts_dir);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    for (const auto& part : detail::split(csv, ','))
        if (!detail::trim(part).empty()) out.push_back(std::stod(detail::trim(part)));
    return out;
}

std::vector<std::uint64_t> parse_count_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    for (const auto& part : detail::split(csv, ','))
        if (!detail::trim(part).empty()) out.push_back(std::stoull(detail::trim(part)));
    return out;
}

const char* error_type(const std::exception& e) {
    if (dynamic_cast<const RangeError*>(&e)) return "range_error";
    if (dynamic_cast<const ParseError*>(&e)) return "parse_error";
    if (dynamic_cast<const ScorerError*>(&e)) return "scorer_error";
    if (dynamic_cast<const EmbedderError*>(&e)) return "embedder_error";
    if (dynamic_cast<const AuthError*>(&e)) return "auth_error";
    if (dynamic_cast<const RateLimited*>(&e)) return "rate_limited";
    if (dynamic_cast<const MalformedResponse*>(&e)) return "malformed_response";
    if (dynamic_cast<const UnsupportedBackend*>(&e)) return "unsupported_backend";
    if (dynamic_cast<const NonConvergence*>(&e)) return "non_convergence";
    if (dynamic_cast<const DuplicateId*>(&e)) return "duplicate_id";
    if (dynamic_cast<const EmptyStore*>(&e)) return "empty_store";
    if (dynamic_cast<const EmptyInput*>(&e)) return "empty_input";
    if (dynamic_cast<const UnparseableVerdict*>(&e)) return "unparseable_verdict";
    if (dynamic_cast<const BackendError*>(&e)) return "backend_error";
    return "error";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LightMem three-stage memory pipeline harness"};
    app.require_subcommand(1);

    CommonFlags flags;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "feed dataset turns through the pipeline and persist stores");
    std::string dataset_path, out_dir;
    ingest->add_option("--dataset", dataset_path, "LongMemEval-format JSON")->required();
    ingest->add_option("--out", out_dir, "output directory")->required();
    bool ingest_traces = false;
    ingest->add_flag("--traces", ingest_traces, "dump segmentation traces per instance");
    add_common(ingest, flags);

    // consolidate
    auto* cons = app.add_subcommand("consolidate", "run the offline parallel update over a persisted store");
    std::string store_dir;
    bool sequential = false;
    cons->add_option("--store", store_dir, "store directory")->required();
    cons->add_flag("--sequential", sequential, "run queues sequentially instead of in parallel");
    add_common(cons, flags);

    // qa
    auto* qa = app.add_subcommand("qa", "answer a question over a persisted store");
    std::string question, question_date;
    qa->add_option("--store", store_dir, "store directory")->required();
    qa->add_option("--question", question, "question text")->required();
    qa->add_option("--question-date", question_date, "timestamp the question is posed at");
    add_common(qa, flags);

    // eval
    auto* eval = app.add_subcommand("eval", "full run: ingest, answer, judge; writes RunResult JSON");
    bool do_consolidate = false;
    eval->add_option("--dataset", dataset_path, "LongMemEval-format JSON")->required();
    eval->add_option("--out", out_dir, "output directory")->required();
    eval->add_flag("--consolidate", do_consolidate, "run the offline update before QA");
    add_common(eval, flags);

    // segeval
    auto* segeval = app.add_subcommand("segeval", "segmentation accuracy against session-boundary labels");
    std::string trace_path;
    segeval->add_option("--dataset", dataset_path, "LongMemEval-format JSON")->required();
    segeval->add_option("--trace", trace_path, "write per-buffer M/B1/B2/B dumps to this JSON file");
    add_common(segeval, flags);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "grid of (r, th) runs");
    std::string r_list = "0.4,0.6,0.8", th_list = "256,512,1024";
    sweep_cmd->add_option("--dataset", dataset_path, "LongMemEval-format JSON")->required();
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();
    sweep_cmd->add_option("--r-grid", r_list, "comma-separated compression ratios");
    sweep_cmd->add_option("--th-grid", th_list, "comma-separated STM thresholds");
    add_common(sweep_cmd, flags);

    // report
    auto* report = app.add_subcommand("report", "render a stored usage report");
    std::string usage_path, format = "text";
    report->add_option("--usage", usage_path, "usage JSON written by ingest/eval")->required();
    report->add_option("--format", format, "text | json")->check(CLI::IsMember({"text", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            std::ifstream in(usage_path);
            if (!in) throw ParseError("cannot open " + usage_path);
            nlohmann::json j;
            in >> j;
            if (format == "json") {
                std::cout << j.dump(2) << '\n';
            } else {
                MeterSnapshot snap;
                const auto& phases = j.at("phases");
                auto read = [&phases](Phase p) {
                    PhaseTotals t;
                    const auto& a = phases.at(phase_name(p));
                    t.input_tokens = a.at("input_tokens").get<std::uint64_t>();
                    t.output_tokens = a.at("output_tokens").get<std::uint64_t>();
                    t.calls = a.at("calls").get<std::uint64_t>();
                    t.wall_ms = static_cast<std::uint64_t>(std::stod(a.at("time_s").get<std::string>()) * 1000.0);
                    return t;
                };
                for (Phase p : {Phase::Summary, Phase::Update, Phase::QA, Phase::Judge})
                    snap.phases[static_cast<std::size_t>(p)] = read(p);
                std::cout << meter_report_text(snap);
            }
            return 0;
        }

        const CLI::App* active = app.get_subcommands().front();
        const PipelineConfig cfg = make_config(active, flags);
        const BoundaryMode mode = parse_mode(flags.mode);
        const PromptSet prompts = load_prompts(flags);
        BackendBundle backends = make_backends(flags);

        if (ingest->parsed()) {
            const auto instances = load_dataset(dataset_path, backends.scorer.get());
            UsageMeter total;
            for (const auto& inst : instances) {
                if (inst.skipped) {
                    std::cerr << "skipping " << inst.question_id << ": " << inst.skip_reason << '\n';
                    continue;
                }
                auto pipeline = feed_turns(inst, cfg, backends.pipeline(), mode, &prompts);
                pipeline->store().save(fs::path(out_dir) / inst.question_id);
                if (ingest_traces) {
                    pipeline->set_collect_traces(true);
                    nlohmann::json traces = nlohmann::json::array();
                    for (const auto& t : pipeline->traces()) traces.push_back(t.to_json());
                    write_text(fs::path(out_dir) / inst.question_id / "traces.json", traces.dump(2) + "\n");
                }
                total.merge(pipeline->meter());
            }
            write_text(fs::path(out_dir) / "usage.json", meter_report_json(total.snapshot()).dump(2) + "\n");
            std::cout << meter_report_text(total.snapshot());
            return 0;
        }

        if (cons->parsed()) {
            LtmStore store = LtmStore::load(store_dir);
            const auto queues = build_update_queues(store, cfg.queue_topk, cfg.queue_length);
            UsageMeter meter;
            ConsolidateOptions opts;
            opts.parallel = !sequential;
            opts.prompts = &prompts;
            ChatModel* updater = backends.updater ? backends.updater.get() : backends.chat.get();
            const auto rep = consolidate(store, queues, *updater, *backends.embedder, meter, *backends.clock, opts);
            store.save(store_dir);
            std::cout << "updated " << rep.updated << " entries, " << rep.skipped_empty << " empty queues, "
                      << rep.failures.size() << " failures; generation " << store.generation() << '\n';
            std::cout << meter_report_text(meter.snapshot());
            return rep.failures.empty() ? 0 : 2;
        }

        if (qa->parsed()) {
            LtmStore store = LtmStore::load(store_dir);
            UsageMeter meter;
            EvalInstance inst;
            inst.question = question;
            inst.question_date = question_date;
            const std::string answer = answer_question(inst, store, *backends.chat, *backends.embedder, cfg, meter,
                                                       *backends.clock, nullptr, &prompts);
            std::cout << answer << '\n';
            return 0;
        }

        if (eval->parsed()) {
            const auto instances = load_dataset(dataset_path, backends.scorer.get());
            HarnessOptions opts;
            opts.mode = mode;
            opts.consolidate = do_consolidate;
            opts.prompts = &prompts;
            opts.qa_chat = backends.chat.get();
            opts.judge = backends.judge ? backends.judge.get() : backends.chat.get();
            const RunResult rr = run_eval(instances, cfg, backends.pipeline(), opts);
            write_text(fs::path(out_dir) / "runresult.json", rr.to_json().dump(2) + "\n");
            write_text(fs::path(out_dir) / "usage.json", meter_report_json(rr.usage).dump(2) + "\n");
            std::cout << "accuracy " << rr.accuracy << " over " << rr.questions.size() << " questions ("
                      << rr.skipped.size() << " skipped)\n";
            std::cout << meter_report_text(rr.usage);
            return 0;
        }

        if (segeval->parsed()) {
            const auto instances = load_dataset(dataset_path, backends.scorer.get());
            SegEvalReport rep;
            const double acc = eval_segmentation(instances, cfg, *backends.scorer, *backends.embedder, mode, &rep,
                                                 !trace_path.empty());
            if (!trace_path.empty()) {
                nlohmann::json traces = nlohmann::json::array();
                for (const auto& t : rep.traces) traces.push_back(t.to_json());
                write_text(trace_path, traces.dump(2) + "\n");
            }
            std::cout << "labels " << rep.labels << ", predicted " << rep.predicted << ", correct " << rep.correct
                      << '\n';
            std::cout << "accuracy " << acc << ", precision " << rep.precision() << '\n';
            return 0;
        }

        if (sweep_cmd->parsed()) {
            const auto instances = load_dataset(dataset_path, backends.scorer.get());
            HarnessOptions opts;
            opts.mode = mode;
            opts.prompts = &prompts;
            opts.qa_chat = backends.chat.get();
            opts.judge = backends.judge ? backends.judge.get() : backends.chat.get();
            const auto rows =
                sweep(instances, parse_double_list(r_list), parse_count_list(th_list), cfg, backends.pipeline(), opts);
            write_text(fs::path(out_dir) / "sweep.json", sweep_json(rows).dump(2) + "\n");
            std::cout << sweep_table(rows);
            return 0;
        }
    } catch (const std::exception& e) {
        const nlohmann::json err{{"error", {{"type", error_type(e)}, {"message", e.what()}}}};
        std::cerr << err.dump() << '\n';
        return 1;
    }
    return 0;
}
