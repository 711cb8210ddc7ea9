#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "sallm/llm_client.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "sallm/error.hpp"
#include "sallm/parallel.hpp"

namespace sallm {

namespace fs = std::filesystem;

namespace {

constexpr const char* kEpoch = "1970-01-01T00:00:00Z";
constexpr const char* kDefaultAuthEnv = "SALLM_API_KEY";

long long temperature_key(double t) { return std::llround(t * 1e6); }

std::string replay_key_text(const std::string& prompt_id, const std::string& model, double t, int index) {
    return prompt_id + "/" + model + "/T=" + format_fixed(t, 2) + "/#" + std::to_string(index);
}

}  // namespace

void GenerationRequest::validate() const {
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (!(temperature >= 0.0 && temperature <= 1.0)) throw ConfigError("temperature must lie in [0, 1]");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (prompt_id.empty()) throw ConfigError("prompt_id must be set");
}

json to_json(const GeneratedSample& s) {
    return json{{"prompt_id", s.prompt_id},     {"sample_index", s.sample_index},
                {"model_name", s.model_name},   {"temperature", s.temperature},
                {"raw_output", s.raw_output},   {"created_at", s.created_at}};
}

GeneratedSample sample_from_json(const json& j) {
    try {
        GeneratedSample s;
        s.prompt_id = j.at("prompt_id").get<std::string>();
        s.sample_index = j.at("sample_index").get<int>();
        s.model_name = j.at("model_name").get<std::string>();
        s.temperature = j.at("temperature").get<double>();
        s.raw_output = j.at("raw_output").get<std::string>();
        s.created_at = j.value("created_at", std::string(kEpoch));
        return s;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed sample record: ") + e.what());
    }
}

std::string_view to_string(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::HttpCompletion: return "http-completion";
        case ProviderKind::HttpChat: return "http-chat";
        case ProviderKind::Replay: return "replay";
    }
    return "?";
}

ProviderKind provider_kind_from_string(std::string_view s) {
    if (s == "http-completion") return ProviderKind::HttpCompletion;
    if (s == "http-chat") return ProviderKind::HttpChat;
    if (s == "replay") return ProviderKind::Replay;
    throw ConfigError("unknown provider '" + std::string(s) + "'");
}

int default_max_new_tokens(ProviderKind kind) {
    return kind == ProviderKind::HttpChat ? 512 : 256;
}

void ProviderConfig::validate() const {
    if (kind == ProviderKind::Replay) {
        if (!replay_path) throw ConfigError("replay provider requires a replay store path");
    } else if (!endpoint || endpoint->empty()) {
        throw ConfigError(std::string(to_string(kind)) + " provider requires an endpoint");
    }
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

// --- replay ---------------------------------------------------------------

ReplayProvider::Key ReplayProvider::key_of(const std::string& prompt_id, const std::string& model,
                                           double temperature, int index) {
    return {prompt_id, model, temperature_key(temperature), index};
}

ReplayProvider::ReplayProvider(const fs::path& store) {
    if (!fs::exists(store)) throw IoError("replay store not found: " + store.string());
    for (const auto& row : read_jsonl(store)) {
        GeneratedSample s = sample_from_json(row);
        store_[key_of(s.prompt_id, s.model_name, s.temperature, s.sample_index)] = std::move(s);
    }
}

ReplayProvider::ReplayProvider(std::span<const GeneratedSample> samples) {
    for (const auto& s : samples) store_[key_of(s.prompt_id, s.model_name, s.temperature, s.sample_index)] = s;
}

std::vector<GeneratedSample> ReplayProvider::generate(const GenerationRequest& req) {
    req.validate();
    std::vector<GeneratedSample> out;
    out.reserve(static_cast<size_t>(req.n_samples));
    for (int i = 0; i < req.n_samples; ++i) {
        auto it = store_.find(key_of(req.prompt_id, req.model_name, req.temperature, i));
        if (it == store_.end()) {
            throw ReplayMiss("replay store has no sample " +
                             replay_key_text(req.prompt_id, req.model_name, req.temperature, i));
        }
        out.push_back(it->second);
    }
    return out;
}

// --- http -------------------------------------------------------------------

HttpProvider::HttpProvider(const ProviderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::string& url = *cfg_.endpoint;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();

    const std::string env_name = cfg_.auth.value_or(kDefaultAuthEnv);
    const char* token = std::getenv(env_name.c_str());
    if (token == nullptr || *token == '\0') {
        throw AuthFailure("environment variable " + env_name + " is not set");
    }
    token_ = token;
}

std::string HttpProvider::request_path() const {
    return base_path_ + (cfg_.kind == ProviderKind::HttpChat ? "/chat/completions" : "/completions");
}

json HttpProvider::request_body(const GenerationRequest& req, int n) const {
    json body{{"model", req.model_name},
              {"n", n},
              {"temperature", req.temperature},
              {"max_tokens", req.max_new_tokens}};
    if (cfg_.kind == ProviderKind::HttpChat) {
        body["messages"] = json::array({json{{"role", "user"}, {"content", req.prompt_text}}});
    } else {
        body["prompt"] = req.prompt_text;
    }
    if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
    return body;
}

std::vector<std::string> HttpProvider::post_with_retry(const GenerationRequest& req, int n) {
    httplib::Client client(scheme_host_port_);
    client.set_bearer_token_auth(token_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(cfg_.request_timeout);
    client.set_write_timeout(std::chrono::seconds(30));

    const std::string body = request_body(req, n).dump();
    const std::string path = request_path();

    std::string last_error;
    double retry_after = 0.0;
    bool last_was_rate_limit = false;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            auto delay = cfg_.backoff_base * (1 << (attempt - 1));
            if (last_was_rate_limit && retry_after > 0.0) {
                delay = std::max(delay, std::chrono::milliseconds(static_cast<long long>(retry_after * 1000)));
            }
            std::this_thread::sleep_for(delay);
        }

        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "connection to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error());
            last_was_rate_limit = false;
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthFailure("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
        }
        if (res->status == 429) {
            last_was_rate_limit = true;
            retry_after = res->has_header("Retry-After") ? std::atof(res->get_header_value("Retry-After").c_str()) : 0.0;
            last_error = "rate limited (HTTP 429)";
            continue;
        }
        if (res->status >= 500) {
            last_was_rate_limit = false;
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProviderUnreachable("provider rejected request (HTTP " + std::to_string(res->status) +
                                      "): " + res->body.substr(0, 300));
        }

        json doc;
        try {
            doc = json::parse(res->body);
            std::vector<std::pair<int, std::string>> texts;
            int position = 0;
            for (const auto& choice : doc.at("choices")) {
                int idx = choice.value("index", position);
                std::string text = cfg_.kind == ProviderKind::HttpChat
                                       ? choice.at("message").at("content").get<std::string>()
                                       : choice.at("text").get<std::string>();
                texts.emplace_back(idx, std::move(text));
                ++position;
            }
            std::stable_sort(texts.begin(), texts.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<std::string> out;
            for (auto& [_, t] : texts) out.push_back(std::move(t));
            return out;
        } catch (const json::exception& e) {
            throw ProviderUnreachable(std::string("malformed provider response: ") + e.what());
        }
    }
    if (last_was_rate_limit) {
        throw RateLimited("provider kept rate limiting after " + std::to_string(cfg_.max_retries) + " retries",
                          retry_after, cfg_.max_retries + 1);
    }
    throw ProviderUnreachable(last_error + " (after " + std::to_string(cfg_.max_retries) + " retries)");
}

std::vector<GeneratedSample> HttpProvider::generate(const GenerationRequest& req) {
    req.validate();
    std::vector<GeneratedSample> out;
    // Some endpoints cap n per call; keep asking until n samples are in hand.
    int empty_rounds = 0;
    while (static_cast<int>(out.size()) < req.n_samples) {
        const int want = req.n_samples - static_cast<int>(out.size());
        auto texts = post_with_retry(req, want);
        if (texts.empty()) {
            if (++empty_rounds > cfg_.max_retries) throw ProviderUnreachable("provider returned no choices");
            continue;
        }
        const std::string now = utc_now_iso8601();
        for (auto& text : texts) {
            if (static_cast<int>(out.size()) == req.n_samples) break;
            out.push_back({req.prompt_id, static_cast<int>(out.size()), req.model_name, req.temperature,
                           std::move(text), now});
        }
    }
    return out;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
    cfg.validate();
    if (cfg.kind == ProviderKind::Replay) return std::make_unique<ReplayProvider>(*cfg.replay_path);
    return std::make_unique<HttpProvider>(cfg);
}

std::vector<GeneratedSample> generate(const GenerationRequest& req, const ProviderConfig& cfg) {
    return make_provider(cfg)->generate(req);
}

std::vector<std::vector<GeneratedSample>> generate_all(Provider& provider, std::span<const GenerationRequest> reqs,
                                                       int max_in_flight) {
    std::vector<std::vector<GeneratedSample>> results(reqs.size());
    parallel_for(reqs.size(), max_in_flight, [&](size_t i) { results[i] = provider.generate(reqs[i]); });
    return results;
}

void record(std::span<const GeneratedSample> samples, const fs::path& path) {
    std::vector<json> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

std::vector<GeneratedSample> read_samples(const fs::path& path) {
    std::vector<GeneratedSample> out;
    for (const auto& row : read_jsonl(path)) out.push_back(sample_from_json(row));
    return out;
}

std::string utc_now_iso8601() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace sallm
