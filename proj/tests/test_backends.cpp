#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lightmem/backends.hpp"
#include "lightmem/openai_client.hpp"

using namespace lightmem;

namespace {

class FakeTransport : public HttpTransport {
public:
    explicit FakeTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}

    HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders&) override {
        last_path = path;
        last_body = body;
        ++posts;
        if (script_.empty()) return {500, "script exhausted"};
        HttpResponse r = script_.front();
        if (script_.size() > 1) script_.erase(script_.begin());
        return r;
    }

    std::string last_path, last_body;
    int posts = 0;

private:
    std::vector<HttpResponse> script_;
};

std::string chat_ok_body(const std::string& text, int in_tokens, int out_tokens) {
    nlohmann::json j{{"choices", nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})},
                     {"usage", {{"prompt_tokens", in_tokens}, {"completion_tokens", out_tokens}}}};
    return j.dump();
}

} // namespace

TEST_CASE("mock scorer is a pure function of input and seed") {
    MockScorer a(11), b(11), c(12);
    const std::string text = "alpha beta gamma";
    REQUIRE(a.retention_scores(text) == b.retention_scores(text));
    REQUIRE(a.retention_scores(text) != c.retention_scores(text));

    const auto att1 = a.attention({"x y", "z w"}, {8, 9});
    const auto att2 = b.attention({"x y", "z w"}, {8, 9});
    REQUIRE(att1.layers.size() == 2);
    REQUIRE(att1.layers[0].data == att2.layers[0].data);
}

TEST_CASE("mock attention is causal") {
    MockScorer scorer(4);
    const auto att = scorer.attention({"a b c", "d e"}, {8});
    const auto& m = att.layers[0];
    for (std::size_t q = 0; q < m.rows; ++q)
        for (std::size_t key = q + 1; key < m.cols; ++key) REQUIRE(m.at(q, key) == 0.0);
}

TEST_CASE("hash embedding is unit norm and deterministic") {
    HashEmbedder embedder(64, 3);
    const auto v1 = embedder.embed("some interesting text");
    const auto v2 = embedder.embed("some interesting text");
    REQUIRE(v1 == v2);
    double norm = 0.0;
    for (float x : v1) norm += static_cast<double>(x) * x;
    REQUIRE(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(cosine(v1, v2) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("token-disjoint texts on disjoint buckets have cosine zero") {
    HashEmbedder embedder(64, 0);
    // probe for two tokens living in different buckets
    std::string t1 = "aaa", t2;
    for (int i = 0; i < 1000; ++i) {
        const std::string cand = "w" + std::to_string(i);
        if (embedder.bucket_of(cand) != embedder.bucket_of(t1)) {
            t2 = cand;
            break;
        }
    }
    REQUIRE_FALSE(t2.empty());
    REQUIRE(cosine(embedder.embed(t1), embedder.embed(t2)) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("empty text embeds to a fixed unit vector") {
    HashEmbedder embedder(16);
    const auto v = embedder.embed("");
    REQUIRE(v[0] == 1.0f);
}

TEST_CASE("mock chat judges by substring containment") {
    MockChat chat;
    const std::string yes_prompt =
        "Question: q\nCorrect Answer: Lisbon\nModel Response: you said you are moving to lisbon in september\n\n"
        "Is the model response correct? Answer yes or no only.";
    REQUIRE(chat.complete(yes_prompt).text == "yes");
    const std::string no_prompt =
        "Question: q\nCorrect Answer: Porto\nModel Response: moving to lisbon\n\n"
        "Is the model response correct? Answer yes or no only.";
    REQUIRE(chat.complete(no_prompt).text == "no");
}

TEST_CASE("mock chat reports whitespace token usage") {
    MockChat chat;
    const auto res = chat.complete("one two three four");
    REQUIRE(res.input_tokens == 4);
    REQUIRE(res.output_tokens == whitespace_token_count(res.text));
}

TEST_CASE("logical clock ticks deterministically") {
    LogicalClock clock;
    const auto a = clock.now_ms();
    const auto b = clock.now_ms();
    REQUIRE(b == a + 1);
}

TEST_CASE("http chat echo transport reports usage and one attempt") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, chat_ok_body("pong", 7, 2)}});
    OpenAiChatModel chat(transport, "test-model", "key", RetryPolicy{4, 0});
    const auto res = chat.complete("ping message");
    REQUIRE(res.text == "pong");
    REQUIRE(res.input_tokens == 7);
    REQUIRE(res.output_tokens == 2);
    REQUIRE(chat.attempts() == 1);
    REQUIRE(transport->last_path == "/v1/chat/completions");
    const auto sent = nlohmann::json::parse(transport->last_body);
    REQUIRE(sent["messages"][0]["content"] == "ping message");
}

TEST_CASE("429 thrice then 200 succeeds with four attempts logged") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{
        {429, "slow down"}, {429, "slow down"}, {429, "slow down"}, {200, chat_ok_body("ok", 1, 1)}});
    OpenAiChatModel chat(transport, "m", "", RetryPolicy{4, 0});
    REQUIRE(chat.complete("x").text == "ok");
    REQUIRE(chat.attempts() == 4);
}

TEST_CASE("rate limit past the retry budget raises RateLimited") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{429, "no"}});
    OpenAiChatModel chat(transport, "m", "", RetryPolicy{3, 0});
    REQUIRE_THROWS_AS(chat.complete("x"), RateLimited);
    REQUIRE(chat.attempts() == 3);
}

TEST_CASE("non-JSON response raises MalformedResponse") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, "<html>not json</html>"}});
    OpenAiChatModel chat(transport, "m", "", RetryPolicy{2, 0});
    REQUIRE_THROWS_AS(chat.complete("x"), MalformedResponse);
}

TEST_CASE("auth failures abort without retries") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{401, "who are you"}});
    OpenAiChatModel chat(transport, "m", "bad-key", RetryPolicy{5, 0});
    REQUIRE_THROWS_AS(chat.complete("x"), AuthError);
    REQUIRE(chat.attempts() == 1);
}

TEST_CASE("embeddings are normalized on receipt") {
    nlohmann::json body{{"data", nlohmann::json::array({{{"embedding", {3.0, 4.0}}}})}};
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, body.dump()}});
    OpenAiEmbedder embedder(transport, "m", 2, "", RetryPolicy{2, 0});
    const auto v = embedder.embed("hello");
    REQUIRE(v[0] == Catch::Approx(0.6f));
    REQUIRE(v[1] == Catch::Approx(0.8f));
}

TEST_CASE("embedding dimension mismatch is an embedder error") {
    nlohmann::json body{{"data", nlohmann::json::array({{{"embedding", {1.0, 0.0, 0.0}}}})}};
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{200, body.dump()}});
    OpenAiEmbedder embedder(transport, "m", 2, "", RetryPolicy{2, 0});
    REQUIRE_THROWS_AS(embedder.embed("hello"), EmbedderError);
}

TEST_CASE("http token scorer round-trips tokens, scores, and attention") {
    nlohmann::json score_body{{"tokens", {"a", "b"}}, {"scores", {0.25, 0.75}}};
    nlohmann::json att_body{{"tokens", {"a", "b"}},
                            {"spans", {{0, 1}, {1, 2}}},
                            {"layers", {{{0.0, 0.0}, {1.0, 0.0}}}}};
    auto transport = std::make_shared<FakeTransport>(
        std::vector<HttpResponse>{{200, score_body.dump()}, {200, att_body.dump()}});
    HttpTokenScorer scorer(transport, 512, "", RetryPolicy{2, 0});
    REQUIRE(scorer.tokenize("a b") == std::vector<std::string>{"a", "b"});
    const auto att = scorer.attention({"a", "b"}, {8});
    REQUIRE(att.layers.size() == 1);
    REQUIRE(att.layers[0].at(1, 0) == 1.0);
    REQUIRE(scorer.context_window() == 512);
}

TEST_CASE("scorer shim rejection surfaces as ScorerError") {
    auto transport = std::make_shared<FakeTransport>(std::vector<HttpResponse>{{400, "undecodable"}});
    HttpTokenScorer scorer(transport, 512, "", RetryPolicy{2, 0});
    REQUIRE_THROWS_AS(scorer.retention_scores("bad"), ScorerError);
}

TEST_CASE("uniform logprob mock yields log-V surprisal everywhere") {
    MockLogprobLm lm(128);
    const auto lps = lm.prompt_logprobs("x y z");
    for (const auto& lp : lps) REQUIRE(-lp.logprob == Catch::Approx(std::log(128.0)));
}
