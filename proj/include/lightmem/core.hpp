#pragma once
// Shared domain types and pipeline configuration.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lightmem/errors.hpp"

namespace lightmem {

// One user/assistant exchange; the unit of incremental ingestion.
// user_text and assistant_text may each be empty, but not both.
struct Turn {
    std::uint64_t turn_id = 0;
    std::string session_id;
    std::string user_text;
    std::string assistant_text;
    // Logical ordinal assigned at ingestion; only a total order is required.
    std::uint64_t timestamp = 0;
};

enum class Phase { Summary = 0, Update = 1, QA = 2, Judge = 3 };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Summary: return "summary";
        case Phase::Update: return "update";
        case Phase::QA: return "qa";
        case Phase::Judge: return "judge";
    }
    return "?";
}

struct UsageRecord {
    Phase phase = Phase::Summary;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    std::uint64_t wall_ms = 0;

    std::uint64_t total_tokens() const { return input_tokens + output_tokens; }
};

// Small dense row-major matrix; big enough for sentence-level attention.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct PipelineConfig {
    // Retention fraction: the share of tokens *kept* by pre-compression.
    double compression_ratio = 0.5;
    // STM buffer flush threshold in tokens; 0 flushes after every admit.
    std::uint64_t stm_threshold = 256;
    std::uint64_t sensory_buffer_capacity = 512;
    // Adjacent-sentence cosine below this marks a similarity boundary.
    double similarity_threshold = 0.5;
    std::uint64_t queue_topk = 5;
    std::uint64_t queue_length = 5;
    std::vector<int> attention_layers{8, 9, 10, 11};
    std::uint64_t sink_mask_width = 3;
    // Ratio used by the repeated-halving fallback when a sentence overflows
    // the scorer context window.
    double fallback_ratio = 0.5;
    std::uint64_t retrieval_topk = 5;

    bool operator==(const PipelineConfig&) const = default;
};

inline PipelineConfig validate_config(const PipelineConfig& cfg) {
    if (!(cfg.compression_ratio > 0.0) || cfg.compression_ratio > 1.0)
        throw RangeError("compression_ratio must be in (0, 1]");
    if (cfg.sensory_buffer_capacity == 0)
        throw RangeError("sensory_buffer_capacity must be positive");
    if (cfg.similarity_threshold < 0.0 || cfg.similarity_threshold > 1.0)
        throw RangeError("similarity_threshold must be in [0, 1]");
    if (cfg.queue_topk == 0)
        throw RangeError("queue_topk must be positive");
    if (cfg.queue_length == 0)
        throw RangeError("queue_length must be positive");
    if (cfg.attention_layers.empty())
        throw RangeError("attention_layers must name at least one layer");
    for (int layer : cfg.attention_layers)
        if (layer < 0) throw RangeError("attention_layers entries must be non-negative");
    if (cfg.sink_mask_width * 2 >= cfg.sensory_buffer_capacity)
        throw RangeError("sink_mask_width too large for sensory_buffer_capacity");
    if (!(cfg.fallback_ratio > 0.0) || cfg.fallback_ratio >= 1.0)
        throw RangeError("fallback_ratio must be in (0, 1)");
    if (cfg.retrieval_topk == 0)
        throw RangeError("retrieval_topk must be positive");
    return cfg;
}

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << v;
    return os.str();
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("config value for '" + key + "' is not a number: " + v);
    }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(n);
    } catch (const std::exception&) {
        throw ParseError("config value for '" + key + "' is not a count: " + v);
    }
}

} // namespace detail

// Applies one flat key/value assignment; used by both the config-file loader
// and CLI flag overrides so the two agree on names and parsing.
inline void apply_config_kv(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const std::string v = detail::trim(value);
    if (key == "compression_ratio") {
        cfg.compression_ratio = detail::parse_double(key, v);
    } else if (key == "stm_threshold") {
        cfg.stm_threshold = detail::parse_count(key, v);
    } else if (key == "sensory_buffer_capacity") {
        cfg.sensory_buffer_capacity = detail::parse_count(key, v);
    } else if (key == "similarity_threshold") {
        cfg.similarity_threshold = detail::parse_double(key, v);
    } else if (key == "queue_topk") {
        cfg.queue_topk = detail::parse_count(key, v);
    } else if (key == "queue_length") {
        cfg.queue_length = detail::parse_count(key, v);
    } else if (key == "attention_layers") {
        std::vector<int> layers;
        for (const auto& part : detail::split(v, ',')) {
            const std::string p = detail::trim(part);
            if (p.empty()) continue;
            layers.push_back(static_cast<int>(detail::parse_count(key, p)));
        }
        cfg.attention_layers = std::move(layers);
    } else if (key == "sink_mask_width") {
        cfg.sink_mask_width = detail::parse_count(key, v);
    } else if (key == "fallback_ratio") {
        cfg.fallback_ratio = detail::parse_double(key, v);
    } else if (key == "retrieval_topk") {
        cfg.retrieval_topk = detail::parse_count(key, v);
    } else {
        throw ParseError("unknown config key: " + key);
    }
}

inline std::string config_to_kv(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << "compression_ratio = " << detail::format_double(cfg.compression_ratio) << '\n'
       << "stm_threshold = " << cfg.stm_threshold << '\n'
       << "sensory_buffer_capacity = " << cfg.sensory_buffer_capacity << '\n'
       << "similarity_threshold = " << detail::format_double(cfg.similarity_threshold) << '\n'
       << "queue_topk = " << cfg.queue_topk << '\n'
       << "queue_length = " << cfg.queue_length << '\n';
    os << "attention_layers = ";
    for (std::size_t i = 0; i < cfg.attention_layers.size(); ++i) {
        if (i) os << ',';
        os << cfg.attention_layers[i];
    }
    os << '\n'
       << "sink_mask_width = " << cfg.sink_mask_width << '\n'
       << "fallback_ratio = " << detail::format_double(cfg.fallback_ratio) << '\n'
       << "retrieval_topk = " << cfg.retrieval_topk << '\n';
    return os.str();
}

inline PipelineConfig config_from_kv(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + " has no '='");
        apply_config_kv(cfg, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return cfg;
}

inline PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_kv(ss.str());
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
    return nlohmann::json{
        {"compression_ratio", cfg.compression_ratio},
        {"stm_threshold", cfg.stm_threshold},
        {"sensory_buffer_capacity", cfg.sensory_buffer_capacity},
        {"similarity_threshold", cfg.similarity_threshold},
        {"queue_topk", cfg.queue_topk},
        {"queue_length", cfg.queue_length},
        {"attention_layers", cfg.attention_layers},
        {"sink_mask_width", cfg.sink_mask_width},
        {"fallback_ratio", cfg.fallback_ratio},
        {"retrieval_topk", cfg.retrieval_topk},
    };
}

} // namespace lightmem
