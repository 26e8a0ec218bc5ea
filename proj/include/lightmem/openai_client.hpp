#pragma once
// HTTP clients for OpenAI-compatible chat/embeddings services and for a
// token-scorer shim. Transport is injectable so tests run against fakes.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lightmem/backends.hpp"
#include "lightmem/errors.hpp"

namespace lightmem {

struct HttpResponse {
    int status = 0; // 0 = transport failure
    std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) = 0;
};

class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(std::string base_url) : client_(base_url) {
        client_.set_connection_timeout(30);
        client_.set_read_timeout(300);
    }

    HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override {
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client_.Post(path, h, body, "application/json");
        if (!res) return {0, httplib::to_string(res.error())};
        return {res->status, res->body};
    }

private:
    httplib::Client client_;
};

struct RetryPolicy {
    int max_attempts = 4;
    int backoff_base_ms = 100; // doubled per retry; 0 disables sleeping
};

namespace detail {

// Shared request loop: bounded retries with exponential backoff on 429/5xx
// and transport failures; auth failures abort immediately. Every attempt is
// counted.
inline nlohmann::json post_json_with_retries(HttpTransport& transport, const std::string& path,
                                             const nlohmann::json& payload, const std::string& api_key,
                                             const RetryPolicy& retry, std::atomic<std::uint64_t>& attempts) {
    HttpHeaders headers{{"Content-Type", "application/json"}};
    if (!api_key.empty()) headers.emplace_back("Authorization", "Bearer " + api_key);
    const std::string body = payload.dump();

    HttpResponse last;
    for (int attempt = 0; attempt < retry.max_attempts; ++attempt) {
        if (attempt > 0 && retry.backoff_base_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(retry.backoff_base_ms << (attempt - 1)));
        attempts.fetch_add(1, std::memory_order_relaxed);
        last = transport.post(path, body, headers);
        if (last.status == 401 || last.status == 403)
            throw AuthError("authentication failed (HTTP " + std::to_string(last.status) + ")");
        const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
        if (!transient) break;
    }
    if (last.status == 429) throw RateLimited("rate limited after retry budget");
    if (last.status == 0) throw BackendError("transport failure: " + last.body);
    if (last.status < 200 || last.status >= 300)
        throw BackendError("HTTP " + std::to_string(last.status) + ": " + last.body);
    try {
        return nlohmann::json::parse(last.body);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResponse(std::string("response is not JSON: ") + e.what());
    }
}

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

} // namespace detail

// Chat completions client (OpenAI wire shape).
class OpenAiChatModel : public ChatModel {
public:
    OpenAiChatModel(std::shared_ptr<HttpTransport> transport, std::string model, std::string api_key = "",
                    RetryPolicy retry = {})
        : transport_(std::move(transport)), model_(std::move(model)), api_key_(std::move(api_key)), retry_(retry) {}

    // Env: LIGHTMEM_CHAT_URL, LIGHTMEM_CHAT_KEY, LIGHTMEM_CHAT_MODEL (role
    // prefix overridable, e.g. LIGHTMEM_JUDGE_*).
    static std::unique_ptr<OpenAiChatModel> from_env(const std::string& role = "CHAT") {
        const std::string url = detail::env_or(("LIGHTMEM_" + role + "_URL").c_str(), "");
        if (url.empty()) throw BackendError("LIGHTMEM_" + role + "_URL is not set");
        return std::make_unique<OpenAiChatModel>(
            std::make_shared<HttplibTransport>(url),
            detail::env_or(("LIGHTMEM_" + role + "_MODEL").c_str(), "gpt-4o-mini"),
            detail::env_or(("LIGHTMEM_" + role + "_KEY").c_str(), ""));
    }

    ChatResult complete(const std::string& prompt) override {
        const nlohmann::json payload{
            {"model", model_},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0.0},
        };
        const nlohmann::json res =
            detail::post_json_with_retries(*transport_, "/v1/chat/completions", payload, api_key_, retry_, attempts_);
        ChatResult out;
        try {
            out.text = res.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected chat completion shape: ") + e.what());
        }
        if (res.contains("usage")) {
            out.input_tokens = res["usage"].value("prompt_tokens", std::uint64_t{0});
            out.output_tokens = res["usage"].value("completion_tokens", std::uint64_t{0});
        } else {
            out.input_tokens = whitespace_token_count(prompt);
            out.output_tokens = whitespace_token_count(out.text);
        }
        return out;
    }

    std::uint64_t attempts() const { return attempts_.load(std::memory_order_relaxed); }

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string model_;
    std::string api_key_;
    RetryPolicy retry_;
    std::atomic<std::uint64_t> attempts_{0};
};

// Embeddings client; vectors are L2-normalized on receipt.
class OpenAiEmbedder : public Embedder {
public:
    OpenAiEmbedder(std::shared_ptr<HttpTransport> transport, std::string model, std::size_t dimension,
                   std::string api_key = "", RetryPolicy retry = {})
        : transport_(std::move(transport)),
          model_(std::move(model)),
          dim_(dimension),
          api_key_(std::move(api_key)),
          retry_(retry) {
        if (dim_ < 2) throw RangeError("embedder dimension must be >= 2");
    }

    static std::unique_ptr<OpenAiEmbedder> from_env() {
        const std::string url = detail::env_or("LIGHTMEM_EMBED_URL", "");
        if (url.empty()) throw BackendError("LIGHTMEM_EMBED_URL is not set");
        const std::string dim = detail::env_or("LIGHTMEM_EMBED_DIM", "1536");
        return std::make_unique<OpenAiEmbedder>(std::make_shared<HttplibTransport>(url),
                                                detail::env_or("LIGHTMEM_EMBED_MODEL", "text-embedding-3-small"),
                                                static_cast<std::size_t>(std::stoull(dim)),
                                                detail::env_or("LIGHTMEM_EMBED_KEY", ""));
    }

    std::size_t dimension() const override { return dim_; }

    std::vector<float> embed(const std::string& text) override {
        const nlohmann::json payload{{"model", model_}, {"input", text}};
        const nlohmann::json res =
            detail::post_json_with_retries(*transport_, "/v1/embeddings", payload, api_key_, retry_, attempts_);
        std::vector<float> v;
        try {
            v = res.at("data").at(0).at("embedding").get<std::vector<float>>();
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected embeddings shape: ") + e.what());
        }
        if (v.size() != dim_)
            throw EmbedderError("embedding dimension " + std::to_string(v.size()) + " != configured " +
                                std::to_string(dim_));
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw EmbedderError("zero-norm embedding");
        for (float& x : v) x = static_cast<float>(x / norm);
        return v;
    }

    std::uint64_t attempts() const { return attempts_.load(std::memory_order_relaxed); }

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string model_;
    std::size_t dim_;
    std::string api_key_;
    RetryPolicy retry_;
    std::atomic<std::uint64_t> attempts_{0};
};

// Client for an out-of-process token-scorer shim (e.g. a compression model
// served over HTTP). Wire format:
//   POST /score      {"text": ...}                -> {"tokens": [...], "scores": [...]}
//   POST /attention  {"sentences": [...], "layers": [...]}
//        -> {"tokens": [...], "spans": [[b,e],...], "layers": [[[...]], ...]}
class HttpTokenScorer : public TokenScorer {
public:
    HttpTokenScorer(std::shared_ptr<HttpTransport> transport, std::size_t context_window,
                    std::string api_key = "", RetryPolicy retry = {})
        : transport_(std::move(transport)), window_(context_window), api_key_(std::move(api_key)), retry_(retry) {
        if (window_ == 0) throw RangeError("scorer context window must be positive");
    }

    static std::unique_ptr<HttpTokenScorer> from_env() {
        const std::string url = detail::env_or("LIGHTMEM_SCORER_URL", "");
        if (url.empty()) throw BackendError("LIGHTMEM_SCORER_URL is not set");
        const std::string window = detail::env_or("LIGHTMEM_SCORER_WINDOW", "512");
        return std::make_unique<HttpTokenScorer>(std::make_shared<HttplibTransport>(url),
                                                 static_cast<std::size_t>(std::stoull(window)),
                                                 detail::env_or("LIGHTMEM_SCORER_KEY", ""));
    }

    std::vector<std::string> tokenize(const std::string& text) const override { return score_request(text).first; }

    std::vector<double> retention_scores(const std::string& text) override { return score_request(text).second; }

    std::size_t context_window() const override { return window_; }

    bool supports_attention() const override { return true; }

    TokenAttention attention(const std::vector<std::string>& sentences, const std::vector<int>& layers) override {
        const nlohmann::json payload{{"sentences", sentences}, {"layers", layers}};
        nlohmann::json res;
        try {
            res = detail::post_json_with_retries(*transport_, "/attention", payload, api_key_, retry_, attempts_);
        } catch (const AuthError&) {
            throw;
        } catch (const RateLimited&) {
            throw;
        } catch (const MalformedResponse&) {
            throw;
        } catch (const BackendError& e) {
            throw ScorerError(e.what());
        }
        TokenAttention out;
        try {
            out.tokens = res.at("tokens").get<std::vector<std::string>>();
            for (const auto& span : res.at("spans"))
                out.spans.emplace_back(span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>());
            for (const auto& layer : res.at("layers")) {
                Matrix m(out.tokens.size(), out.tokens.size());
                for (std::size_t r = 0; r < m.rows; ++r)
                    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = layer.at(r).at(c).get<double>();
                out.layers.push_back(std::move(m));
            }
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected attention shape: ") + e.what());
        }
        return out;
    }

    std::uint64_t attempts() const { return attempts_.load(std::memory_order_relaxed); }

private:
    std::pair<std::vector<std::string>, std::vector<double>> score_request(const std::string& text) const {
        const nlohmann::json payload{{"text", text}};
        nlohmann::json res;
        try {
            res = detail::post_json_with_retries(*transport_, "/score", payload, api_key_, retry_, attempts_);
        } catch (const AuthError&) {
            throw;
        } catch (const RateLimited&) {
            throw;
        } catch (const MalformedResponse&) {
            throw;
        } catch (const BackendError& e) {
            // shim-side failure, including rejected (undecodable) input
            throw ScorerError(e.what());
        }
        try {
            return {res.at("tokens").get<std::vector<std::string>>(), res.at("scores").get<std::vector<double>>()};
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected score shape: ") + e.what());
        }
    }

    std::shared_ptr<HttpTransport> transport_;
    std::size_t window_;
    std::string api_key_;
    RetryPolicy retry_;
    mutable std::atomic<std::uint64_t> attempts_{0};
};

} // namespace lightmem
