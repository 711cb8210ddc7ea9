// sallm: generate -> repair -> assess -> score -> report over a prompt dataset.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sallm/dataset.hpp"
#include "sallm/error.hpp"
#include "sallm/pipeline.hpp"
#include "sallm/syntax_checker.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitConfig = 2;

struct Flags {
    std::string dataset;
    std::string provider = "replay";
    std::string model;
    std::string temperatures = "0.0,0.2,0.4,0.6,0.8,1.0";
    int samples = 10;
    std::string ks = "1,3,5";
    std::optional<int> max_new_tokens;
    int timeout = 60;
    std::string mode = "both";
    std::string match = "prompt-cwe";
    std::string out = "runs";
    int jobs = 0;
    std::optional<std::string> analyzer_path;
    std::optional<std::string> endpoint;
    std::optional<std::string> replay;
    std::string run_id;
    std::string static_backend = "auto";
    std::string rules;
    std::string aliases;
    std::string container_runtime = "docker";
    std::string shim;
    std::string python = "python3";
    std::string prompt_style = "code";
    bool force = false;
    bool quiet = false;
};

void add_run_flags(CLI::App& cmd, Flags& f) {
    cmd.add_option("--dataset", f.dataset, "Dataset root (one directory per prompt)")->required();
    cmd.add_option("--provider", f.provider, "Generation backend")
        ->check(CLI::IsMember({"http-chat", "http-completion", "replay"}))
        ->capture_default_str();
    cmd.add_option("--model", f.model, "Model name sent to the provider")->required();
    cmd.add_option("--temperatures", f.temperatures, "Comma list of sampling temperatures in [0,1]")
        ->capture_default_str();
    cmd.add_option("--samples", f.samples, "Samples per prompt and temperature (n)")->capture_default_str();
    cmd.add_option("--k", f.ks, "Comma list of k values")->capture_default_str();
    cmd.add_option("--max-new-tokens", f.max_new_tokens, "Token budget per sample (default 256, chat 512)");
    cmd.add_option("--timeout", f.timeout, "Per-sample dynamic assessment timeout, seconds")->capture_default_str();
    cmd.add_option("--mode", f.mode, "Assessment mode")
        ->check(CLI::IsMember({"dynamic", "static", "both"}))
        ->capture_default_str();
    cmd.add_option("--match", f.match, "Static finding match rule")
        ->check(CLI::IsMember({"prompt-cwe", "any-cwe"}))
        ->capture_default_str();
    cmd.add_option("--out", f.out, "Output directory; the run lives in <out>/<run-id>")->capture_default_str();
    cmd.add_option("--jobs", f.jobs, "Worker threads and concurrent containers (0: logical CPUs)")
        ->capture_default_str();
    cmd.add_option("--analyzer-path", f.analyzer_path, "Static analyzer CLI (else $SALLM_ANALYZER, else codeql)");
    cmd.add_option("--endpoint", f.endpoint, "Provider base URL (else $SALLM_BASE_URL)");
    cmd.add_option("--replay", f.replay, "Replay store (JSONL) for --provider replay");
    cmd.add_option("--run-id", f.run_id, "Run id (default: derived from the configuration)");
    cmd.add_option("--static-backend", f.static_backend, "auto: external analyzer when installed, else builtin")
        ->check(CLI::IsMember({"auto", "external", "builtin"}))
        ->capture_default_str();
    cmd.add_option("--rules", f.rules, "Rule registry JSON (rule id -> CWE)");
    cmd.add_option("--aliases", f.aliases, "CWE alias JSON");
    cmd.add_option("--container-runtime", f.container_runtime, "Docker-compatible CLI")->capture_default_str();
    cmd.add_option("--shim", f.shim, "In-container test shim (required for dynamic assessment)");
    cmd.add_option("--python", f.python, "Interpreter used for syntax checks")->capture_default_str();
    cmd.add_option("--prompt-style", f.prompt_style, "Prompt form sent to the model")
        ->check(CLI::IsMember({"code", "text"}))
        ->capture_default_str();
    cmd.add_flag("--force", f.force, "Reuse a run directory that holds a different configuration");
    cmd.add_flag("-q,--quiet", f.quiet, "No progress output");
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

sallm::RunConfig to_config(const Flags& f) {
    sallm::RunConfig cfg;
    cfg.dataset_root = f.dataset;
    cfg.provider.kind = sallm::provider_kind_from_string(f.provider);
    cfg.provider.endpoint = f.endpoint ? f.endpoint : env("SALLM_BASE_URL");
    if (f.replay) cfg.provider.replay_path = *f.replay;
    cfg.model_name = f.model;
    cfg.temperatures = sallm::parse_temperatures(f.temperatures);
    cfg.n_samples = f.samples;
    cfg.ks = sallm::parse_ks(f.ks);
    cfg.max_new_tokens = f.max_new_tokens;
    cfg.timeout = std::chrono::seconds(f.timeout);
    cfg.mode = sallm::assessment_mode_from_string(f.mode);
    cfg.match_mode = sallm::match_mode_from_string(f.match);
    cfg.output_dir = f.out;
    cfg.run_id = f.run_id;
    cfg.jobs = f.jobs;
    cfg.prompt_style = sallm::prompt_style_from_string(f.prompt_style);
    cfg.static_backend = sallm::static_backend_from_string(f.static_backend);
    cfg.analyzer_path = f.analyzer_path;
    cfg.rule_registry = f.rules;
    cfg.cwe_aliases = f.aliases;
    cfg.container_runtime = f.container_runtime;
    cfg.shim = f.shim;
    cfg.interpreter = f.python;
    if (f.jobs > 0) cfg.provider.max_in_flight = std::min(cfg.provider.max_in_flight, f.jobs);
    return cfg;
}

int exit_code_for(const std::string& kind) {
    return kind == "ConfigError" || kind == "AuthFailure" ? kExitConfig : kExitPipeline;
}

int run_stage(const Flags& f, void (sallm::Pipeline::*step)()) {
    sallm::Pipeline pipeline(to_config(f), f.force);
    if (!f.quiet) pipeline.on_progress = [](const std::string& msg) { std::cerr << "[sallm] " << msg << "\n"; };
    (pipeline.*step)();
    std::cout << pipeline.run_dir().string() << "\n";
    return kExitOk;
}

int validate(const std::string& root, const std::string& python) {
    sallm::SyntaxChecker checker(python);
    sallm::Dataset d = sallm::load_dataset(root, checker);
    for (const auto& p : d.prompts) std::cout << p.id << "  " << p.cwe_id << "  ok\n";
    std::cout << d.size() << " prompts valid, digest " << sallm::dataset_digest(d) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Secure-code benchmark harness for LLM code generators"};
    app.require_subcommand(1);

    Flags f;
    std::string validate_root;
    std::string validate_python = "python3";
    auto* cmd_validate = app.add_subcommand("validate", "Load and validate a dataset");
    cmd_validate->add_option("--dataset", validate_root, "Dataset root")->required();
    cmd_validate->add_option("--python", validate_python, "Interpreter used for syntax checks")->capture_default_str();

    struct Step {
        const char* name;
        const char* help;
        void (sallm::Pipeline::*fn)();
    };
    const Step steps[] = {
        {"generate", "Sample completions for every prompt and temperature", &sallm::Pipeline::generate},
        {"repair", "Extract, complete and syntax-check the samples", &sallm::Pipeline::repair},
        {"assess", "Run static and/or dynamic assessment", &sallm::Pipeline::assess},
        {"score", "Compute pass@k, vulnerable@k and secure@k into report.json", &sallm::Pipeline::score},
        {"report", "Render report.csv and report.md from report.json", &sallm::Pipeline::report},
        {"run", "All stages; completed stages are skipped", &sallm::Pipeline::run_all},
    };
    std::vector<std::pair<CLI::App*, const Step*>> step_cmds;
    for (const auto& s : steps) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_run_flags(*cmd, f);
        step_cmds.emplace_back(cmd, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*cmd_validate) return validate(validate_root, validate_python);
        for (const auto& [cmd, step] : step_cmds) {
            if (*cmd) return run_stage(f, step->fn);
        }
    } catch (const sallm::StageError& e) {
        std::cerr << "sallm: " << e.what() << "\n";
        return exit_code_for(e.cause_kind());
    } catch (const sallm::Error& e) {
        std::cerr << "sallm: " << e.kind() << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "sallm: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitPipeline;
}
