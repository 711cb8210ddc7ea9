#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sallm/dataset.hpp"
#include "sallm/io.hpp"
#include "sallm/repair.hpp"

namespace sallm {

enum class FindingOrigin { External, Builtin };

struct Finding {
    std::string rule_id;
    std::optional<std::string> cwe_id;
    // Further CWE tags carried by the same rule (analyzers often tag several).
    std::vector<std::string> related_cwe_ids;
    std::string file;
    int line = 1;
    std::string message;
    FindingOrigin origin = FindingOrigin::Builtin;

    friend bool operator==(const Finding&, const Finding&) = default;
};

json to_json(const Finding& f);
Finding finding_from_json(const json& j);

enum class MatchMode { MatchPromptCwe, AnyCwe };

std::string_view to_string(MatchMode mode);
MatchMode match_mode_from_string(std::string_view s);

struct StaticVerdict {
    std::string prompt_id;
    int sample_index = 0;
    bool vulnerable = false;
    std::vector<Finding> findings;
    MatchMode match_mode = MatchMode::MatchPromptCwe;
};

json to_json(const StaticVerdict& v);
StaticVerdict static_verdict_from_json(const json& j);

// --- rule registry ---------------------------------------------------------

struct RuleInfo {
    std::string rule_id;
    std::string cwe_id;
    std::string description;

    friend bool operator==(const RuleInfo&, const RuleInfo&) = default;
};

// rule_id -> {cwe_id, pattern description}. File form:
//   {"rules": {"py/sql-injection": {"cwe_id": "CWE-89", "description": "..."}}}
class RuleRegistry {
public:
    static RuleRegistry builtin();
    static RuleRegistry load(const std::filesystem::path& file);

    const RuleInfo* find(std::string_view rule_id) const;
    const std::map<std::string, RuleInfo, std::less<>>& rules() const { return rules_; }
    json to_json() const;

    friend bool operator==(const RuleRegistry&, const RuleRegistry&) = default;

private:
    std::map<std::string, RuleInfo, std::less<>> rules_;
};

// Undirected CWE relation used by MatchPromptCwe (e.g. CWE-89 child of
// CWE-943). File form: {"CWE-89": ["CWE-943"], ...}.
class CweAliases {
public:
    static CweAliases defaults();
    static CweAliases load(const std::filesystem::path& file);
    static CweAliases none() { return {}; }

    void add(const std::string& a, const std::string& b);
    bool related(std::string_view a, std::string_view b) const;
    json to_json() const;

    friend bool operator==(const CweAliases&, const CweAliases&) = default;

private:
    std::map<std::string, std::set<std::string>, std::less<>> edges_;
};

// "external/cwe/cwe-089" -> "CWE-89"; nullopt for other tags.
std::optional<std::string> cwe_from_tag(std::string_view tag);

// --- SARIF -------------------------------------------------------------------

// One Finding per result; location flattened to the first physical location.
// Rule CWEs come from the rule's tags, falling back to `registry`. Throws
// SarifParseError naming a JSON pointer.
std::vector<Finding> parse_sarif(const json& doc, const RuleRegistry* registry = nullptr);
std::vector<Finding> parse_sarif_text(std::string_view text, const RuleRegistry* registry = nullptr);
std::vector<Finding> parse_sarif_file(const std::filesystem::path& file, const RuleRegistry* registry = nullptr);

// --- scanners ----------------------------------------------------------------

// Token-pattern scanner over Python source. Rules (ids follow the external
// analyzer's naming so verdicts are comparable):
//   py/weak-sensitive-data-hashing  CWE-328
//   py/sql-injection                CWE-89
//   py/command-line-injection       CWE-78
//   py/flask-debug                  CWE-215
//   py/hardcoded-credentials        CWE-798
std::vector<Finding> builtin_scan(std::string_view code, std::string_view file_name = "sample.py");

struct AnalyzerConfig {
    // CodeQL-compatible CLI.
    std::string binary = "codeql";
    std::string query_suite = "codeql/python-queries";
    std::chrono::seconds timeout{600};
    std::vector<std::string> extra_analyze_args;
};

// Analyzer binary from --analyzer-path, else SALLM_ANALYZER, else "codeql".
std::string resolve_analyzer_binary(const std::optional<std::string>& flag);

// One analyzer database over all given samples of a prompt; findings keyed by
// sample_index. Throws AnalyzerMissing, AnalyzerCrash, SarifParseError.
std::map<int, std::vector<Finding>> run_external_batch(std::span<const RepairResult> samples, const Prompt& p,
                                                       const AnalyzerConfig& cfg,
                                                       const RuleRegistry* registry = nullptr);

std::vector<Finding> run_external(const RepairResult& r, const Prompt& p, const AnalyzerConfig& cfg,
                                  const RuleRegistry* registry = nullptr);

// MatchPromptCwe counts findings whose CWE (or a related tag) equals the
// prompt's CWE or an alias of it; AnyCwe counts every finding.
StaticVerdict decide(std::vector<Finding> findings, const Prompt& p, MatchMode mode,
                     const CweAliases& aliases = CweAliases::defaults(), int sample_index = 0);

}  // namespace sallm
