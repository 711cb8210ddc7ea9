#pragma once

#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sallm/dataset.hpp"
#include "sallm/io.hpp"
#include "sallm/process.hpp"
#include "sallm/repair.hpp"

namespace sallm {

// Optional file in a prompt's env/ directory: {"network": "none" | "bridge"}.
inline constexpr std::string_view kSandboxConfigFile = "sandbox.json";
inline constexpr std::string_view kShimFileName = "sallm_shim.py";
inline constexpr std::string_view kVerdictSentinel = "SALLM-VERDICT:";

struct EnvSpec {
    std::string prompt_id;
    std::filesystem::path build_context;
    std::string image_tag;
    std::string network = "none";

    friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// "sallm-env:<first 16 hex of the build-context digest>".
std::string image_tag_for(const std::filesystem::path& build_context);

// Network mode declared by the build context; "none" when undeclared.
std::string declared_network(const std::filesystem::path& build_context);

enum class FunctionalOutcome { Pass, Fail, Error };
enum class SecurityOutcome { Secure, Vulnerable, Error };

std::string_view to_string(FunctionalOutcome o);
std::string_view to_string(SecurityOutcome o);
FunctionalOutcome functional_from_string(std::string_view s);
SecurityOutcome security_from_string(std::string_view s);

struct DynamicVerdict {
    std::string prompt_id;
    int sample_index = 0;
    FunctionalOutcome functional = FunctionalOutcome::Error;
    std::string functional_detail;  // error message for Error
    SecurityOutcome security = SecurityOutcome::Error;
    std::string security_detail;
    double duration_s = 0.0;
    std::filesystem::path logs_ref;

    bool is_error() const {
        return functional == FunctionalOutcome::Error || security == SecurityOutcome::Error;
    }
};

json to_json(const DynamicVerdict& v);
DynamicVerdict dynamic_verdict_from_json(const json& j);

struct ShimVerdict {
    FunctionalOutcome functional;
    SecurityOutcome security;
    std::string functional_detail;
    std::string security_detail;
    long long duration_ms = 0;
};

// Finds the single sentinel line in the shim's stdout and validates the
// object behind it. Throws ShimProtocolError.
ShimVerdict parse_shim_output(std::string_view stdout_text);

struct ContainerRun {
    std::string image;
    std::string name;
    std::filesystem::path workspace;  // mounted at /workspace
    std::string network = "none";
    std::vector<std::string> command;
    std::chrono::milliseconds timeout{60000};
};

class ContainerRuntime {
public:
    virtual ~ContainerRuntime() = default;
    virtual bool available() = 0;
    virtual bool image_exists(const std::string& tag) = 0;
    virtual ProcessResult build(const std::filesystem::path& context, const std::string& tag) = 0;
    virtual ProcessResult run(const ContainerRun& spec) = 0;
};

// Any docker-compatible CLI (docker, podman).
class DockerCliRuntime : public ContainerRuntime {
public:
    explicit DockerCliRuntime(std::string binary = "docker") : binary_(std::move(binary)) {}

    bool available() override;
    bool image_exists(const std::string& tag) override;
    ProcessResult build(const std::filesystem::path& context, const std::string& tag) override;
    ProcessResult run(const ContainerRun& spec) override;

    const std::string& binary() const { return binary_; }

private:
    std::string binary_;
};

// build_env with per-prompt single flight: concurrent requests for the same
// prompt share one build.
class EnvBuilder {
public:
    explicit EnvBuilder(ContainerRuntime& runtime) : runtime_(runtime) {}

    // Throws RuntimeUnavailable or BuildFailure (with a log excerpt).
    EnvSpec build_env(const Prompt& p);

    int builds_performed() const;

private:
    EnvSpec build_uncached(const Prompt& p);

    ContainerRuntime& runtime_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_future<EnvSpec>> inflight_;
    int builds_ = 0;
    int available_ = -1;
};

struct DynamicConfig {
    std::filesystem::path shim;  // copied into each workspace as sallm_shim.py
    std::chrono::seconds timeout{60};
    std::filesystem::path logs_dir;
    std::string interpreter = "python3";
};

// Writes the sample as <prompt_id>.py beside the prompt's test file and the
// shim, runs the shim in a fresh container and maps its verdict. Timeouts
// become Error("timeout") on both facets. Throws ShimProtocolError or
// RuntimeUnavailable; std::invalid_argument for non-compilable samples.
DynamicVerdict run_assessment(const RepairResult& r, const Prompt& p, const EnvSpec& env, ContainerRuntime& runtime,
                              const DynamicConfig& cfg);

}  // namespace sallm
