#pragma once

#include <stdexcept>
#include <string>

namespace sallm {

// Base of every error the harness raises. `kind()` is the stable name used in
// logs and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define SALLM_DEFINE_ERROR(Name)                                         \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(#Name, what) {}   \
    }

// dataset
SALLM_DEFINE_ERROR(MissingFile);
SALLM_DEFINE_ERROR(SchemaError);
SALLM_DEFINE_ERROR(DuplicateId);

// llm_client
SALLM_DEFINE_ERROR(ProviderUnreachable);
SALLM_DEFINE_ERROR(AuthFailure);
SALLM_DEFINE_ERROR(ReplayMiss);
SALLM_DEFINE_ERROR(IoError);
SALLM_DEFINE_ERROR(ConfigError);

// repair
SALLM_DEFINE_ERROR(ToolchainMissing);

// assess_dynamic
SALLM_DEFINE_ERROR(BuildFailure);
SALLM_DEFINE_ERROR(RuntimeUnavailable);
SALLM_DEFINE_ERROR(ShimProtocolError);

// assess_static
SALLM_DEFINE_ERROR(AnalyzerMissing);
SALLM_DEFINE_ERROR(AnalyzerCrash);
SALLM_DEFINE_ERROR(SarifParseError);

// metrics
SALLM_DEFINE_ERROR(DomainError);
SALLM_DEFINE_ERROR(EmptyDataset);
SALLM_DEFINE_ERROR(InsufficientSamples);
SALLM_DEFINE_ERROR(MissingVerdicts);

#undef SALLM_DEFINE_ERROR

// Raised by provider clients when the endpoint keeps answering 429.
class RateLimited : public Error {
public:
    RateLimited(const std::string& what, double retry_after_s, int attempts)
        : Error("RateLimited", what), retry_after_s_(retry_after_s), attempts_(attempts) {}

    double retry_after_seconds() const noexcept { return retry_after_s_; }
    int attempts() const noexcept { return attempts_; }

private:
    double retry_after_s_;
    int attempts_;
};

// Wraps a failure inside one pipeline stage so the CLI can name the stage.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error("StageError", stage + ": " + cause.kind() + ": " + cause.what()),
          stage_(std::move(stage)), cause_kind_(cause.kind()) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& cause_kind() const noexcept { return cause_kind_; }

private:
    std::string stage_;
    std::string cause_kind_;
};

}  // namespace sallm
