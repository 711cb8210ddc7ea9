// Must match the configuration the library compiles httplib with.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "sallm/error.hpp"
#include "sallm/llm_client.hpp"
#include "sallm/process.hpp"
#include "test_support.hpp"

using namespace sallm;
using sallm::testing::fixtures;
using sallm::testing::ScopedEnv;

namespace {

GenerationRequest request(int n = 3, double t = 0.4) {
    GenerationRequest r;
    r.prompt_id = "A_cwe89_0";
    r.prompt_text = "def f():\n";
    r.n_samples = n;
    r.temperature = t;
    r.max_new_tokens = 64;
    r.model_name = "m";
    return r;
}

// OpenAI-style endpoint on a random localhost port.
class LocalServer {
public:
    std::atomic<int> calls{0};
    std::atomic<int> rate_limit_first{0};
    std::atomic<int> per_call_cap{100};
    int fail_status = 0;
    std::mutex mu;
    std::vector<json> bodies;
    std::vector<std::string> auth_headers;

    LocalServer() {
        auto handler = [this](bool chat) {
            return [this, chat](const httplib::Request& req, httplib::Response& res) {
                int call = calls++;
                {
                    std::lock_guard lock(mu);
                    bodies.push_back(json::parse(req.body));
                    auth_headers.push_back(req.get_header_value("Authorization"));
                }
                if (fail_status) {
                    res.status = fail_status;
                    return;
                }
                if (call < rate_limit_first) {
                    res.status = 429;
                    res.set_header("Retry-After", "0");
                    return;
                }
                json body = json::parse(req.body);
                int n = std::min(body.at("n").get<int>(), per_call_cap.load());
                json choices = json::array();
                // Reverse order on the wire; the client sorts by index.
                for (int i = n - 1; i >= 0; --i) {
                    std::string text = "sample " + std::to_string(i) + " call " + std::to_string(call);
                    choices.push_back(chat ? json{{"index", i}, {"message", {{"role", "assistant"}, {"content", text}}}}
                                           : json{{"index", i}, {"text", text}});
                }
                res.set_content(json{{"choices", choices}}.dump(), "application/json");
            };
        };
        server_.Post("/v1/chat/completions", handler(true));
        server_.Post("/v1/completions", handler(false));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    ProviderConfig config(ProviderKind kind) const {
        ProviderConfig cfg;
        cfg.kind = kind;
        cfg.endpoint = endpoint();
        cfg.backoff_base = std::chrono::milliseconds(1);
        return cfg;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(Replay, ServesRecordedSamplesInIndexOrder) {
    ReplayProvider replay(fixtures() / "replay" / "store.jsonl");
    EXPECT_EQ(replay.size(), 30u);
    GenerationRequest req = request(5, 0.4);
    req.model_name = "fixture-model";
    auto out = replay.generate(req);
    ASSERT_EQ(out.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(out[i].sample_index, i);
        EXPECT_EQ(out[i].prompt_id, "A_cwe89_0");
        EXPECT_EQ(out[i].created_at, "2024-01-01T00:00:00Z");
    }
    EXPECT_EQ(replay.generate(req), out);
}

TEST(Replay, MissesNameTheKey) {
    ReplayProvider replay(fixtures() / "replay" / "store.jsonl");
    GenerationRequest req = request(6, 0.4);
    req.model_name = "fixture-model";
    try {
        replay.generate(req);
        FAIL();
    } catch (const ReplayMiss& e) {
        EXPECT_NE(std::string(e.what()).find("A_cwe89_0"), std::string::npos);
    }
    req.n_samples = 1;
    req.temperature = 0.2;
    EXPECT_THROW(replay.generate(req), ReplayMiss);
    req.temperature = 0.4;
    req.model_name = "other";
    EXPECT_THROW(replay.generate(req), ReplayMiss);
}

TEST(Replay, RecordRoundTrip) {
    sallm::TempDir tmp("rec");
    std::vector<GeneratedSample> samples{{"p", 0, "m", 0.2, "x = 1\n", "2024-01-01T00:00:00Z"},
                                         {"p", 1, "m", 0.2, "```python\ny = 'é'\n```", "2024-01-01T00:00:01Z"}};
    record(samples, tmp.path() / "s.jsonl");
    EXPECT_EQ(read_samples(tmp.path() / "s.jsonl"), samples);
    ReplayProvider replay(samples);
    GenerationRequest req = request(2, 0.2);
    req.prompt_id = "p";
    EXPECT_EQ(replay.generate(req), samples);
}

TEST(Request, Validation) {
    EXPECT_NO_THROW(request().validate());
    auto bad = request();
    bad.n_samples = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = request();
    bad.temperature = 1.5;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = request();
    bad.max_new_tokens = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_EQ(default_max_new_tokens(ProviderKind::HttpCompletion), 256);
    EXPECT_EQ(default_max_new_tokens(ProviderKind::HttpChat), 512);
}

TEST(Http, MissingTokenIsAuthFailure) {
    ScopedEnv unset("SALLM_API_KEY", std::nullopt);
    ProviderConfig cfg;
    cfg.kind = ProviderKind::HttpChat;
    cfg.endpoint = "http://127.0.0.1:9";
    EXPECT_THROW(HttpProvider{cfg}, AuthFailure);
    ScopedEnv other("MY_TOKEN", "abc");
    cfg.auth = "MY_TOKEN";
    EXPECT_NO_THROW(HttpProvider{cfg});
}

TEST(Http, WireFormats) {
    ScopedEnv key("SALLM_API_KEY", "k");
    ProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9/v1/";
    cfg.kind = ProviderKind::HttpChat;
    HttpProvider chat(cfg);
    auto req = request();
    req.stop_sequences = {"\nclass"};
    json body = chat.request_body(req, 3);
    EXPECT_EQ(chat.request_path(), "/v1/chat/completions");
    EXPECT_EQ(body.at("messages"), json::parse(R"([{"role":"user","content":"def f():\n"}])"));
    EXPECT_EQ(body.at("n"), 3);
    EXPECT_EQ(body.at("max_tokens"), 64);
    EXPECT_EQ(body.at("stop"), json::array({"\nclass"}));
    EXPECT_FALSE(body.contains("top_p"));
    EXPECT_FALSE(body.contains("prompt"));

    cfg.kind = ProviderKind::HttpCompletion;
    HttpProvider completion(cfg);
    json cbody = completion.request_body(request(), 2);
    EXPECT_EQ(completion.request_path(), "/v1/completions");
    EXPECT_EQ(cbody.at("prompt"), "def f():\n");
    EXPECT_FALSE(cbody.contains("messages"));
    EXPECT_FALSE(cbody.contains("stop"));
}

TEST(Http, ChatRoundTrip) {
    ScopedEnv key("SALLM_API_KEY", "secret-token");
    LocalServer server;
    HttpProvider p(server.config(ProviderKind::HttpChat));
    auto out = p.generate(request(3));
    ASSERT_EQ(out.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(out[i].sample_index, i);
        EXPECT_EQ(out[i].raw_output, "sample " + std::to_string(i) + " call 0");
        EXPECT_EQ(out[i].temperature, 0.4);
        EXPECT_EQ(out[i].created_at.size(), 20u);
    }
    EXPECT_EQ(server.auth_headers.at(0), "Bearer secret-token");
    EXPECT_EQ(server.bodies.at(0).at("model"), "m");
}

TEST(Http, CompletionToppedUpWhenEndpointCapsN) {
    ScopedEnv key("SALLM_API_KEY", "k");
    LocalServer server;
    server.per_call_cap = 2;
    HttpProvider p(server.config(ProviderKind::HttpCompletion));
    auto out = p.generate(request(5));
    ASSERT_EQ(out.size(), 5u);
    EXPECT_EQ(server.calls.load(), 3);
    EXPECT_EQ(out[2].raw_output, "sample 0 call 1");
    EXPECT_EQ(out[4].sample_index, 4);
    EXPECT_EQ(server.bodies.at(1).at("n"), 3);
}

TEST(Http, RetriesRateLimitsThenGivesUp) {
    ScopedEnv key("SALLM_API_KEY", "k");
    LocalServer server;
    server.rate_limit_first = 2;
    HttpProvider p(server.config(ProviderKind::HttpChat));
    EXPECT_EQ(p.generate(request(1)).size(), 1u);
    EXPECT_EQ(server.calls.load(), 3);

    LocalServer always;
    always.rate_limit_first = 1000;
    ProviderConfig cfg = always.config(ProviderKind::HttpChat);
    cfg.max_retries = 2;
    HttpProvider q(cfg);
    try {
        q.generate(request(1));
        FAIL();
    } catch (const RateLimited& e) {
        EXPECT_EQ(e.attempts(), 3);
    }
    EXPECT_EQ(always.calls.load(), 3);
}

TEST(Http, RejectedCredentialsAreNotRetried) {
    ScopedEnv key("SALLM_API_KEY", "k");
    LocalServer server;
    server.fail_status = 401;
    HttpProvider p(server.config(ProviderKind::HttpChat));
    EXPECT_THROW(p.generate(request(1)), AuthFailure);
    EXPECT_EQ(server.calls.load(), 1);
}

TEST(Http, UnreachableAfterRetries) {
    ScopedEnv key("SALLM_API_KEY", "k");
    LocalServer server;
    server.fail_status = 503;
    ProviderConfig cfg = server.config(ProviderKind::HttpChat);
    cfg.max_retries = 1;
    HttpProvider p(cfg);
    EXPECT_THROW(p.generate(request(1)), ProviderUnreachable);
    EXPECT_EQ(server.calls.load(), 2);
}

TEST(Http, GenerateAllKeepsRequestOrder) {
    ScopedEnv key("SALLM_API_KEY", "k");
    LocalServer server;
    HttpProvider p(server.config(ProviderKind::HttpCompletion));
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 6; ++i) {
        auto r = request(1);
        r.prompt_id = "p" + std::to_string(i);
        reqs.push_back(r);
    }
    auto out = generate_all(p, reqs, 3);
    ASSERT_EQ(out.size(), 6u);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(out[i].at(0).prompt_id, "p" + std::to_string(i));
}
