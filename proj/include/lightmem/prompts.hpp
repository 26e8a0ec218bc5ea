#pragma once
// Prompt templates for summarization, consolidation, QA, and judging.
// Templates may be overridden from plain-text files; placeholders use
// {name} syntax.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lightmem/errors.hpp"

namespace lightmem {

namespace prompt_markers {
// Stable structural markers shared by the prompt builders and the
// deterministic mock backends that parse them.
inline constexpr const char* kSegmentHeaderPrefix = "[Segment ";
inline constexpr const char* kTargetNote = "Target note";
inline constexpr const char* kNewerNotes = "Newer notes:";
inline constexpr const char* kMemoryEntryPrefix = "[ts ";
inline constexpr const char* kJudgeSuffix = "Answer yes or no only.";
} // namespace prompt_markers

struct PromptSet {
    std::string summary_template;
    std::string update_template;
    std::string qa_template;
    std::string judge_standard;
    std::string judge_temporal;
    std::string judge_knowledge;
    std::string judge_preference;
    std::string judge_abstention;

    static const PromptSet& defaults();
    // Loads overrides from <dir>/<name>.txt (summary, update, qa,
    // judge_standard, judge_temporal, judge_knowledge, judge_preference,
    // judge_abstention); missing files keep the built-in default.
    static PromptSet load_dir(const std::filesystem::path& dir);
};

inline std::string fill_prompt(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string::npos) {
                const std::string key = tmpl.substr(i + 1, close - i - 1);
                const auto it = vars.find(key);
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

inline const PromptSet& PromptSet::defaults() {
    static const PromptSet set = [] {
        PromptSet p;
        p.summary_template =
            "You maintain long-term memory notes for an assistant. Summarize each dialogue "
            "segment below into one concise factual note. Keep names, dates, numbers, places, "
            "and stated preferences exactly as given. Do not invent facts.\n"
            "Return a JSON array of strings with exactly one summary per segment, in order.\n"
            "\n"
            "{segments}";
        p.update_template =
            "Merge the newer memory notes into the target note. Combine and augment: keep every "
            "fact already in the target and add the new facts from the sources. Never delete or "
            "overwrite existing facts; if facts conflict, keep both with their timestamps. "
            "Return only the revised note text.\n"
            "\n"
            "Target note [ts {target_ts}]:\n"
            "{target}\n"
            "\n"
            "Newer notes:\n"
            "{sources}";
        p.qa_template =
            "Answer the question using the memory entries below. Be direct and specific. If the "
            "entries do not contain the needed information, say that you do not know.\n"
            "\n"
            "Memory entries:\n"
            "{entries}\n"
            "\n"
            "Question{question_date}: {question}\n"
            "Answer:";
        p.judge_standard =
            "I will give you a question, a correct answer, and a response from a model. Please "
            "answer yes if the response contains the correct answer. Otherwise, answer no. If the "
            "response is equivalent to the correct answer or contains all the intermediate steps to "
            "get the correct answer, you should also answer yes. If the response only contains a "
            "subset of the information required by the answer, answer no.\n"
            "\n"
            "Question: {question}\n"
            "Correct Answer: {answer}\n"
            "Model Response: {response}\n"
            "\n"
            "Is the model response correct? Answer yes or no only.";
        p.judge_temporal =
            "I will give you a question, a correct answer, and a response from a model. Please "
            "answer yes if the response contains the correct answer. Otherwise, answer no. If the "
            "response is equivalent to the correct answer or contains all the intermediate steps to "
            "get the correct answer, you should also answer yes. If the response only contains a "
            "subset of the information required by the answer, answer no. In addition, do not "
            "penalize off-by-one errors for the number of days. If the question asks for the number "
            "of days/weeks/months, etc., and the model makes off-by-one errors (e.g., predicting 19 "
            "days when the answer is 18), the model's response is still correct.\n"
            "\n"
            "Question: {question}\n"
            "Correct Answer: {answer}\n"
            "Model Response: {response}\n"
            "\n"
            "Is the model response correct? Answer yes or no only.";
        p.judge_knowledge =
            "I will give you a question, a correct answer, and a response from a model. Please "
            "answer yes if the response contains the correct answer. Otherwise, answer no. If the "
            "response contains some previous information along with an updated answer, the response "
            "should be considered as correct as long as the updated answer is the required answer.\n"
            "\n"
            "Question: {question}\n"
            "Correct Answer: {answer}\n"
            "Model Response: {response}\n"
            "\n"
            "Is the model response correct? Answer yes or no only.";
        p.judge_preference =
            "I will give you a question, a rubric for desired personalized response, and a response "
            "from a model. Please answer yes if the response satisfies the desired response. "
            "Otherwise, answer no. The model does not need to reflect all the points in the rubric. "
            "The response is correct as long as it recalls and utilizes the user's personal "
            "information correctly.\n"
            "\n"
            "Question: {question}\n"
            "Rubric: {answer}\n"
            "Model Response: {response}\n"
            "\n"
            "Is the model response correct? Answer yes or no only.";
        p.judge_abstention =
            "I will give you an unanswerable question, an explanation, and a response from a model. "
            "Please answer yes if the model correctly identifies the question as unanswerable. The "
            "model could say that the information is incomplete, or some other information is given "
            "but the asked information is not.\n"
            "\n"
            "Question: {question}\n"
            "Explanation: {answer}\n"
            "Model Response: {response}\n"
            "\n"
            "Does the model correctly identify the question as unanswerable? Answer yes or no only.";
        return p;
    }();
    return set;
}

inline PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
    PromptSet p = defaults();
    auto maybe = [&dir](const char* name, std::string& slot) {
        const auto path = dir / (std::string(name) + ".txt");
        std::ifstream in(path);
        if (!in) return;
        std::ostringstream ss;
        ss << in.rdbuf();
        slot = ss.str();
        if (slot.empty()) throw ParseError("prompt file is empty: " + path.string());
    };
    maybe("summary", p.summary_template);
    maybe("update", p.update_template);
    maybe("qa", p.qa_template);
    maybe("judge_standard", p.judge_standard);
    maybe("judge_temporal", p.judge_temporal);
    maybe("judge_knowledge", p.judge_knowledge);
    maybe("judge_preference", p.judge_preference);
    maybe("judge_abstention", p.judge_abstention);
    return p;
}

} // namespace lightmem
