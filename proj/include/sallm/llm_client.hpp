#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sallm/io.hpp"

namespace sallm {

struct GenerationRequest {
    // Identifies the prompt in replay stores and in the produced samples.
    std::string prompt_id;
    std::string prompt_text;
    int n_samples = 1;
    double temperature = 0.0;
    int max_new_tokens = 256;
    std::vector<std::string> stop_sequences;
    std::string model_name;

    // Throws ConfigError on a violated invariant.
    void validate() const;
};

struct GeneratedSample {
    std::string prompt_id;
    int sample_index = 0;
    std::string model_name;
    double temperature = 0.0;
    std::string raw_output;
    // ISO-8601 UTC.
    std::string created_at;

    friend bool operator==(const GeneratedSample&, const GeneratedSample&) = default;
};

json to_json(const GeneratedSample& s);
GeneratedSample sample_from_json(const json& j);

enum class ProviderKind { HttpCompletion, HttpChat, Replay };

std::string_view to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view s);

// Default max_new_tokens per provider family: 256 for completion models, 512
// for chat models, which spend tokens on prose around the code.
int default_max_new_tokens(ProviderKind kind);

struct ProviderConfig {
    ProviderKind kind = ProviderKind::Replay;
    std::optional<std::string> endpoint;
    // Name of the environment variable holding the bearer token.
    std::optional<std::string> auth;
    std::optional<std::filesystem::path> replay_path;

    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    std::chrono::seconds request_timeout{120};
    int max_in_flight = 4;

    void validate() const;
};

class Provider {
public:
    virtual ~Provider() = default;
    // Returns exactly req.n_samples samples indexed 0..n-1, raw text untouched.
    virtual std::vector<GeneratedSample> generate(const GenerationRequest& req) = 0;
};

// Serves samples recorded earlier, keyed by
// (prompt_id, model_name, temperature, sample_index).
class ReplayProvider final : public Provider {
public:
    explicit ReplayProvider(const std::filesystem::path& store);
    explicit ReplayProvider(std::span<const GeneratedSample> samples);

    std::vector<GeneratedSample> generate(const GenerationRequest& req) override;
    size_t size() const { return store_.size(); }

private:
    using Key = std::tuple<std::string, std::string, long long, int>;
    static Key key_of(const std::string& prompt_id, const std::string& model, double temperature, int index);

    std::map<Key, GeneratedSample> store_;
};

// OpenAI-compatible completions / chat-completions client. Chat requests carry
// the prompt as a single user message with no system prompt.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(const ProviderConfig& cfg);
    std::vector<GeneratedSample> generate(const GenerationRequest& req) override;

    // Request body for the configured kind; exposed for wire-format tests.
    json request_body(const GenerationRequest& req, int n) const;
    std::string request_path() const;

private:
    std::vector<std::string> post_with_retry(const GenerationRequest& req, int n);

    ProviderConfig cfg_;
    std::string scheme_host_port_;
    std::string base_path_;
    std::string token_;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

std::vector<GeneratedSample> generate(const GenerationRequest& req, const ProviderConfig& cfg);

// Issues all requests against one provider with at most max_in_flight in
// flight; results keep request order.
std::vector<std::vector<GeneratedSample>> generate_all(Provider& provider,
                                                       std::span<const GenerationRequest> reqs,
                                                       int max_in_flight);

// JSONL, one sample per line; overwrites `path`.
void record(std::span<const GeneratedSample> samples, const std::filesystem::path& path);
std::vector<GeneratedSample> read_samples(const std::filesystem::path& path);

std::string utc_now_iso8601();

}  // namespace sallm
