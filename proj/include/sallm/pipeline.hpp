#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sallm/assess_static.hpp"
#include "sallm/dataset.hpp"
#include "sallm/io.hpp"
#include "sallm/llm_client.hpp"
#include "sallm/metrics.hpp"

namespace sallm {

enum class StaticBackend { Auto, External, Builtin };
std::string_view to_string(StaticBackend b);
StaticBackend static_backend_from_string(std::string_view s);

struct RunConfig {
    std::filesystem::path dataset_root;
    ProviderConfig provider;
    std::string model_name;
    std::vector<double> temperatures{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    int n_samples = 10;
    std::vector<int> ks{1, 3, 5};
    std::optional<int> max_new_tokens;
    std::chrono::seconds timeout{60};
    AssessmentMode mode = AssessmentMode::Both;
    MatchMode match_mode = MatchMode::MatchPromptCwe;
    std::filesystem::path output_dir = "runs";
    std::string run_id;  // derived from the config when empty
    int jobs = 0;        // 0: logical CPUs
    PromptStyle prompt_style = PromptStyle::Code;

    StaticBackend static_backend = StaticBackend::Auto;
    std::optional<std::string> analyzer_path;
    std::filesystem::path rule_registry;  // empty: built-in rules
    std::filesystem::path cwe_aliases;    // empty: default aliases
    std::string container_runtime = "docker";
    std::filesystem::path shim;
    std::string interpreter = "python3";

    // Throws ConfigError.
    void validate() const;
    int effective_jobs() const;
    int effective_max_new_tokens() const;
};

// Comma list of reals or integers, e.g. "0.0,0.2". Throws ConfigError.
std::vector<double> parse_temperatures(std::string_view list);
std::vector<int> parse_ks(std::string_view list);

// Everything that determines the run's outputs: digests of the dataset and
// replay store stand in for their paths; output location and --jobs are left
// out.
json canonical_config(const RunConfig& cfg, const std::string& dataset_digest);

// "run-" + 12 hex of the canonical config digest.
std::string derive_run_id(const json& canonical);

inline constexpr const char* kStageGenerate = "generate";
inline constexpr const char* kStageRepair = "repair";
inline constexpr const char* kStageAssess = "assess";
inline constexpr const char* kStageScore = "score";
inline constexpr const char* kStageReport = "report";

// Per-stage record of the input digest and each output file's digest.
class Manifest {
public:
    static Manifest load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;

    // True when the stage last ran on `input_digest` and its outputs in
    // `dir` are intact.
    bool up_to_date(const std::string& stage, const std::string& input_digest, const std::filesystem::path& dir) const;
    void record(const std::string& stage, const std::string& input_digest, const std::filesystem::path& dir,
                const std::vector<std::string>& outputs);
    void forget(const std::string& stage);

private:
    json doc_ = json::object();
};

struct StageLog {
    std::vector<std::string> ran;
    std::vector<std::string> skipped;
};

// One run directory (<output_dir>/<run_id>) and its stages. Each stage reads
// its predecessor's file and skips itself when the manifest says its outputs
// are current. Stage failures are rethrown as StageError.
class Pipeline {
public:
    // Loads and validates the dataset; pins run.json. Throws ConfigError when
    // the run directory already holds a run with a different config (unless
    // force).
    Pipeline(RunConfig cfg, bool force = false);

    void generate();
    void repair();
    void assess();
    void score();
    void report();
    void run_all();

    const RunConfig& config() const { return cfg_; }
    const std::filesystem::path& run_dir() const { return run_dir_; }
    const Dataset& dataset() const { return dataset_; }
    const StageLog& log() const { return log_; }

    // Verbose progress sink (stderr in the CLI); no-op by default.
    std::function<void(const std::string&)> on_progress;

private:
    template <typename Fn>
    void stage(const char* name, const std::string& input_digest, const std::vector<std::string>& outputs, Fn&& body);
    std::string file_digest(const std::string& name) const;
    void progress(const std::string& msg) const;

    RunConfig cfg_;
    SyntaxChecker toolchain_;
    Dataset dataset_;
    std::string dataset_digest_;
    json canonical_;
    std::filesystem::path run_dir_;
    std::filesystem::path manifest_path_;
    Manifest manifest_;
    StageLog log_;
};

}  // namespace sallm
