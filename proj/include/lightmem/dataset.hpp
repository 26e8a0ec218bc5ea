#pragma once
// LongMemEval-format dataset loading: multi-session dialogue histories with
// a question posed after all sessions.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightmem/backends.hpp"
#include "lightmem/core.hpp"
#include "lightmem/errors.hpp"

namespace lightmem {

struct SessionRef {
    std::string session_id;
    std::string date; // may be empty
    std::vector<Turn> turns;
};

struct EvalInstance {
    std::string question_id;
    std::string question_type;
    std::string question;
    std::string answer;
    std::string question_date;
    std::vector<SessionRef> sessions; // chronological, file order
    bool skipped = false;
    std::string skip_reason;
};

namespace detail {

// Consecutive user/assistant messages pair into turns; a user message opens
// a turn and the next assistant message completes it.
inline std::vector<Turn> turns_from_messages(const nlohmann::json& messages, std::uint64_t& turn_counter,
                                             const std::string& session_id) {
    std::vector<Turn> turns;
    bool open = false;
    for (const auto& msg : messages) {
        const std::string role = msg.value("role", "");
        const std::string content = msg.value("content", "");
        if (role == "user") {
            Turn t;
            t.turn_id = turn_counter++;
            t.session_id = session_id;
            t.user_text = content;
            turns.push_back(std::move(t));
            open = true;
        } else if (role == "assistant") {
            if (open && turns.back().assistant_text.empty()) {
                turns.back().assistant_text = content;
                open = false;
            } else {
                Turn t;
                t.turn_id = turn_counter++;
                t.session_id = session_id;
                t.assistant_text = content;
                turns.push_back(std::move(t));
            }
        }
        // other roles (system, tool) are not part of the dialogue history
    }
    // drop degenerate turns where both sides ended up empty
    std::erase_if(turns, [](const Turn& t) { return t.user_text.empty() && t.assistant_text.empty(); });
    return turns;
}

} // namespace detail

inline EvalInstance parse_instance(const nlohmann::json& j, std::size_t index) {
    EvalInstance inst;
    try {
        inst.question_id = j.at("question_id").is_string() ? j.at("question_id").get<std::string>()
                                                           : j.at("question_id").dump();
        inst.question_type = j.value("question_type", "");
        inst.question = j.value("question", "");
        inst.question_date = j.value("question_date", "");
        if (j.contains("answer")) {
            inst.answer = j["answer"].is_string() ? j["answer"].get<std::string>() : j["answer"].dump();
        }
        const auto& sessions = j.at("haystack_sessions");
        if (!sessions.is_array()) throw ParseError("haystack_sessions is not an array");
        const auto ids = j.value("haystack_session_ids", nlohmann::json::array());
        const auto dates = j.value("haystack_dates", nlohmann::json::array());
        std::uint64_t turn_counter = 0;
        for (std::size_t s = 0; s < sessions.size(); ++s) {
            SessionRef ref;
            ref.session_id = s < ids.size() ? ids[s].get<std::string>() : "session_" + std::to_string(s);
            ref.date = s < dates.size() ? dates[s].get<std::string>() : "";
            ref.turns = detail::turns_from_messages(sessions[s], turn_counter, ref.session_id);
            inst.sessions.push_back(std::move(ref));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("instance " + std::to_string(index) + ": " + e.what());
    }
    return inst;
}

// Loads instances in file order. When a validator scorer is supplied, any
// instance whose text it cannot decode is marked skipped (the run continues;
// skipped instances score false at evaluation time).
inline std::vector<EvalInstance> load_dataset(const std::string& path, const TokenScorer* validator = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (detail::trim(text).empty()) throw ParseError("dataset file is empty: " + path);

    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!root.is_array()) throw ParseError("dataset root must be a JSON array");

    std::vector<EvalInstance> out;
    out.reserve(root.size());
    for (std::size_t i = 0; i < root.size(); ++i) {
        EvalInstance inst = parse_instance(root[i], i);
        if (validator) {
            try {
                for (const auto& session : inst.sessions)
                    for (const auto& t : session.turns) {
                        if (!t.user_text.empty()) validator->tokenize(t.user_text);
                        if (!t.assistant_text.empty()) validator->tokenize(t.assistant_text);
                    }
                validator->tokenize(inst.question);
            } catch (const ScorerError& e) {
                inst.skipped = true;
                inst.skip_reason = e.what();
            }
        }
        out.push_back(std::move(inst));
    }
    return out;
}

// Ground-truth topic labels: the turn ids at which a new session starts.
inline std::vector<std::uint64_t> session_boundary_labels(const EvalInstance& inst) {
    std::vector<std::uint64_t> labels;
    bool first = true;
    for (const auto& session : inst.sessions) {
        if (session.turns.empty()) continue;
        if (!first) labels.push_back(session.turns.front().turn_id);
        first = false;
    }
    return labels;
}

} // namespace lightmem
