#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sallm/syntax_checker.hpp"

namespace sallm {

enum class PromptStyle { Code, Text };

std::string_view to_string(PromptStyle style);
PromptStyle prompt_style_from_string(std::string_view s);

// One benchmark task, loaded from a prompt directory:
//
//   <root>/<id>/prompt.json            metadata and both prompt texts
//   <root>/<id>/insecure_solution.py   complete, runnable insecure program
//   <root>/<id>/test_<id>.py           unittest bundle (functional + security)
//   <root>/<id>/env/Dockerfile         sandbox image
//   <root>/<id>/env/requirements.txt   dependency manifest
struct Prompt {
    std::string id;
    std::string cwe_id;
    std::string title;
    std::string source_url;
    std::string code_prompt;
    std::string text_prompt;
    std::string insecure_solution;
    std::filesystem::path dir;
    std::filesystem::path env_ref;   // env/ build context
    std::filesystem::path test_ref;  // test_<id>.py

    friend bool operator==(const Prompt&, const Prompt&) = default;
};

// Immutable after load; prompts are ordered by id.
struct Dataset {
    std::filesystem::path root;
    std::vector<Prompt> prompts;

    const Prompt* find(std::string_view id) const;
    size_t size() const { return prompts.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ValidationFinding {
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::string prompt_id;
    std::vector<ValidationFinding> findings;

    bool ok() const { return findings.empty(); }
    bool has(std::string_view message) const;
};

inline constexpr std::string_view kPromptFile = "prompt.json";
inline constexpr std::string_view kSolutionFile = "insecure_solution.py";
inline constexpr std::string_view kEnvDir = "env";

// CWE-<positive integer>, no leading zeros.
bool is_well_formed_cwe(std::string_view cwe);

// Reads one prompt directory without semantic validation. Throws MissingFile
// or SchemaError.
Prompt read_prompt_dir(const std::filesystem::path& dir);

ValidationReport validate_prompt(const Prompt& p, const SyntaxChecker& toolchain);

// Loads and validates every prompt under root. Any invalid prompt rejects the
// whole load (SchemaError listing the findings).
Dataset load_dataset(const std::filesystem::path& root, const SyntaxChecker& toolchain);

// Returns the stored field for the style, byte for byte.
const std::string& render_prompt(const Prompt& p, PromptStyle style);

// Digest over the whole dataset tree.
std::string dataset_digest(const Dataset& d);

}  // namespace sallm
