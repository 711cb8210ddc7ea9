#include "sallm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "sallm/digest.hpp"
#include "sallm/error.hpp"
#include "sallm/io.hpp"

namespace sallm {

namespace fs = std::filesystem;

namespace {

const std::set<std::string, std::less<>> kPromptKeys = {"id",          "cwe_id",      "title",
                                                        "source_url",  "code_prompt", "text_prompt"};

std::string string_field(const json& doc, const std::string& key, const fs::path& file, bool nullable) {
    auto it = doc.find(key);
    if (it == doc.end()) throw SchemaError(file.string() + ": missing field '" + key + "'");
    if (nullable && it->is_null()) return {};
    if (!it->is_string()) throw SchemaError(file.string() + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

void require_file(const fs::path& file, const std::string& prompt_dir_name) {
    if (!fs::exists(file)) {
        throw MissingFile("prompt '" + prompt_dir_name + "': missing " + file.string());
    }
}

}  // namespace

std::string_view to_string(PromptStyle style) {
    return style == PromptStyle::Code ? "code" : "text";
}

PromptStyle prompt_style_from_string(std::string_view s) {
    if (s == "code") return PromptStyle::Code;
    if (s == "text") return PromptStyle::Text;
    throw ConfigError("unknown prompt style '" + std::string(s) + "'");
}

const Prompt* Dataset::find(std::string_view id) const {
    auto it = std::lower_bound(prompts.begin(), prompts.end(), id,
                               [](const Prompt& p, std::string_view key) { return p.id < key; });
    return (it != prompts.end() && it->id == id) ? &*it : nullptr;
}

bool ValidationReport::has(std::string_view message) const {
    return std::any_of(findings.begin(), findings.end(),
                       [&](const ValidationFinding& f) { return f.message == message; });
}

bool is_well_formed_cwe(std::string_view cwe) {
    constexpr std::string_view prefix = "CWE-";
    if (cwe.size() <= prefix.size() || cwe.substr(0, prefix.size()) != prefix) return false;
    auto digits = cwe.substr(prefix.size());
    if (digits.front() == '0') return false;
    return std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
}

Prompt read_prompt_dir(const fs::path& dir) {
    const std::string name = dir.filename().string();
    const fs::path meta_file = dir / kPromptFile;
    require_file(meta_file, name);

    json doc;
    try {
        doc = json::parse(read_file(meta_file));
    } catch (const json::parse_error& e) {
        throw SchemaError(meta_file.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw SchemaError(meta_file.string() + ": top level must be an object");
    for (const auto& [key, _] : doc.items()) {
        if (!kPromptKeys.count(key)) throw SchemaError(meta_file.string() + ": unknown field '" + key + "'");
    }

    Prompt p;
    p.id = string_field(doc, "id", meta_file, false);
    p.cwe_id = string_field(doc, "cwe_id", meta_file, false);
    p.title = string_field(doc, "title", meta_file, false);
    p.source_url = string_field(doc, "source_url", meta_file, true);
    p.code_prompt = string_field(doc, "code_prompt", meta_file, false);
    p.text_prompt = string_field(doc, "text_prompt", meta_file, false);
    p.dir = dir;

    const fs::path solution = dir / kSolutionFile;
    require_file(solution, name);
    p.insecure_solution = read_file(solution);

    // The test bundle is named after the declared id, so a directory/id
    // mismatch surfaces here as well as in validation.
    p.test_ref = dir / ("test_" + p.id + std::string(SyntaxChecker::extension));
    require_file(p.test_ref, name);

    p.env_ref = dir / kEnvDir;
    require_file(p.env_ref, name);
    require_file(p.env_ref / "Dockerfile", name);
    require_file(p.env_ref / "requirements.txt", name);
    return p;
}

ValidationReport validate_prompt(const Prompt& p, const SyntaxChecker& toolchain) {
    ValidationReport report{p.id, {}};
    auto add = [&](std::string field, std::string message) {
        report.findings.push_back({std::move(field), std::move(message)});
    };

    if (p.id.empty()) add("id", "empty id");
    if (!p.dir.empty() && p.dir.filename().string() != p.id) {
        add("id", "id does not match directory name '" + p.dir.filename().string() + "'");
    }
    if (!is_well_formed_cwe(p.cwe_id)) add("cwe_id", "malformed CWE id");
    auto blank = [](const std::string& s) {
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    };
    if (blank(p.code_prompt)) add("code_prompt", "empty code prompt");
    if (blank(p.text_prompt)) add("text_prompt", "empty text prompt");

    CompileStatus status = toolchain.check(p.insecure_solution);
    if (!status.pass) add("insecure_solution", "insecure solution not compilable");
    return report;
}

Dataset load_dataset(const fs::path& root, const SyntaxChecker& toolchain) {
    if (!fs::is_directory(root)) throw MissingFile("dataset root not found: " + root.string());

    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());

    Dataset d;
    d.root = root;
    std::set<std::string> seen;
    for (const auto& dir : dirs) {
        Prompt p = read_prompt_dir(dir);
        if (!seen.insert(p.id).second) {
            throw DuplicateId("prompt id '" + p.id + "' declared more than once (again in " + dir.string() + ")");
        }
        d.prompts.push_back(std::move(p));
    }

    for (const auto& p : d.prompts) {
        ValidationReport report = validate_prompt(p, toolchain);
        if (!report.ok()) {
            std::string msg = "prompt '" + p.id + "' is invalid:";
            for (const auto& f : report.findings) msg += " [" + f.field + "] " + f.message + ";";
            throw SchemaError(msg);
        }
    }
    std::sort(d.prompts.begin(), d.prompts.end(),
              [](const Prompt& a, const Prompt& b) { return a.id < b.id; });
    return d;
}

const std::string& render_prompt(const Prompt& p, PromptStyle style) {
    return style == PromptStyle::Code ? p.code_prompt : p.text_prompt;
}

std::string dataset_digest(const Dataset& d) {
    return sha256_tree(d.root);
}

}  // namespace sallm
