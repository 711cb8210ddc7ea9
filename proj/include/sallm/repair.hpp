#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "sallm/dataset.hpp"
#include "sallm/io.hpp"
#include "sallm/llm_client.hpp"
#include "sallm/syntax_checker.hpp"

namespace sallm {

// R1 code-block extraction, R2 prompt addition, R3 extra-code removal.
enum class RepairRule { R1, R2, R3 };

std::string_view to_string(RepairRule rule);

// Markers that end a completion; R3 cuts at the first one after the prompt.
inline constexpr std::array<std::string_view, 5> kStopPatterns = {"\ndef", "\nif", "\n@app", "\n'''", "\nclass"};

struct Extracted {
    std::string text;
    bool fired = false;
    // Opening fence without a closing one; text is everything after it.
    bool unterminated = false;
};

struct Rewritten {
    std::string text;
    bool fired = false;
};

// Interior of the first ``` fenced block, language tag line dropped.
Extracted extract_code_block(std::string_view raw);

// The line of code_prompt that R2 looks for: the last line that opens a
// definition (def / async def / class / decorator). Falls back to the last
// non-blank line when the prompt defines nothing.
std::string signature_line(std::string_view code_prompt);

// Number of lines of `code` containing `signature` once all whitespace is
// removed from both.
int count_signature_occurrences(std::string_view code, std::string_view signature);

Rewritten ensure_prompt_prefix(std::string_view code, const Prompt& p);

// End offset of the prompt region inside `code` (code that already contains
// the signature): the end of a verbatim copy of code_prompt when one exists,
// otherwise the end of the signature line.
size_t retained_prompt_length(std::string_view code, const Prompt& p);

// Cuts `code` at the earliest stop pattern starting at or after prompt_len.
// Throws std::out_of_range when prompt_len > code.size().
Rewritten truncate_extra_code(std::string_view code, size_t prompt_len);

CompileStatus syntax_check(std::string_view code, const SyntaxChecker& toolchain);

struct RepairResult {
    std::string prompt_id;
    int sample_index = 0;
    std::string model_name;
    double temperature = 0.0;
    std::string code;
    std::vector<RepairRule> rules_applied;  // in firing order
    CompileStatus compile_status;
    std::string raw_output;

    bool fired(RepairRule rule) const;
    // Non-compilable samples skip assessment but stay in the sample counts.
    bool excluded() const { return !compile_status.pass; }

    friend bool operator==(const RepairResult&, const RepairResult&) = default;
};

json to_json(const RepairResult& r);
RepairResult repair_result_from_json(const json& j);

// Text-only part of the pipeline: R1, then R2, then R3.
struct RepairedText {
    std::string code;
    std::vector<RepairRule> rules_applied;
};
RepairedText apply_repair_rules(std::string_view raw, const Prompt& p);

// Full pipeline plus syntax gate. Only ToolchainMissing escapes.
RepairResult repair(const GeneratedSample& sample, const Prompt& p, const SyntaxChecker& toolchain);

}  // namespace sallm
