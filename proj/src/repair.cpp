#include "sallm/repair.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "sallm/error.hpp"

namespace sallm {

namespace {

constexpr std::string_view kFence = "```";

bool is_tag_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-' || c == '.' ||
           c == '#';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string strip_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
}

bool opens_definition(std::string_view line) {
    std::string_view t = trim(line);
    return t.starts_with("def ") || t.starts_with("async def ") || t.starts_with("class ") || t.starts_with("@");
}

// Calls fn(line, begin, end) for each line; end excludes the newline.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    size_t begin = 0;
    while (begin <= text.size()) {
        size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        if (!fn(text.substr(begin, end - begin), begin, end)) return;
        if (end == text.size()) return;
        begin = end + 1;
    }
}

}  // namespace

std::string_view to_string(RepairRule rule) {
    switch (rule) {
        case RepairRule::R1: return "R1";
        case RepairRule::R2: return "R2";
        case RepairRule::R3: return "R3";
    }
    return "?";
}

Extracted extract_code_block(std::string_view raw) {
    const size_t open = raw.find(kFence);
    if (open == std::string_view::npos) return {std::string(raw), false, false};

    size_t content = open + kFence.size();
    size_t eol = raw.find('\n', content);
    std::string_view tag_line = raw.substr(content, (eol == std::string_view::npos ? raw.size() : eol) - content);
    std::string_view tag = trim(tag_line);
    if (std::all_of(tag.begin(), tag.end(), is_tag_char) && tag.find(kFence) == std::string_view::npos) {
        content = eol == std::string_view::npos ? raw.size() : eol + 1;
    }

    const size_t close = raw.find(kFence, content);
    if (close == std::string_view::npos) return {std::string(raw.substr(content)), true, true};

    std::string_view body = raw.substr(content, close - content);
    if (body.ends_with('\n')) body.remove_suffix(1);
    if (body.ends_with('\r')) body.remove_suffix(1);
    return {std::string(body), true, false};
}

std::string signature_line(std::string_view code_prompt) {
    std::string_view last_def;
    std::string_view last_nonblank;
    for_each_line(code_prompt, [&](std::string_view line, size_t, size_t) {
        if (line.ends_with('\r')) line.remove_suffix(1);
        if (!trim(line).empty()) last_nonblank = line;
        if (opens_definition(line)) last_def = line;
        return true;
    });
    return std::string(last_def.empty() ? last_nonblank : last_def);
}

int count_signature_occurrences(std::string_view code, std::string_view signature) {
    const std::string needle = strip_whitespace(signature);
    if (needle.empty()) return 0;
    int count = 0;
    for_each_line(code, [&](std::string_view line, size_t, size_t) {
        if (strip_whitespace(line).find(needle) != std::string::npos) ++count;
        return true;
    });
    return count;
}

Rewritten ensure_prompt_prefix(std::string_view code, const Prompt& p) {
    if (count_signature_occurrences(code, signature_line(p.code_prompt)) > 0) return {std::string(code), false};
    std::string out;
    out.reserve(p.code_prompt.size() + 1 + code.size());
    out.append(p.code_prompt).append("\n").append(code);
    return {std::move(out), true};
}

size_t retained_prompt_length(std::string_view code, const Prompt& p) {
    if (!p.code_prompt.empty()) {
        size_t at = code.find(p.code_prompt);
        if (at != std::string_view::npos) return at + p.code_prompt.size();
    }
    const std::string needle = strip_whitespace(signature_line(p.code_prompt));
    if (needle.empty()) return 0;
    size_t result = 0;
    for_each_line(code, [&](std::string_view line, size_t, size_t end) {
        if (strip_whitespace(line).find(needle) != std::string::npos) {
            result = end;
            return false;
        }
        return true;
    });
    return result;
}

Rewritten truncate_extra_code(std::string_view code, size_t prompt_len) {
    if (prompt_len > code.size()) throw std::out_of_range("truncate_extra_code: prompt_len beyond code");
    size_t cut = std::string_view::npos;
    for (std::string_view pattern : kStopPatterns) {
        size_t at = code.find(pattern, prompt_len);
        if (at != std::string_view::npos) cut = std::min(cut, at);
    }
    if (cut == std::string_view::npos) return {std::string(code), false};
    return {std::string(code.substr(0, cut)), true};
}

CompileStatus syntax_check(std::string_view code, const SyntaxChecker& toolchain) {
    return toolchain.check(code);
}

bool RepairResult::fired(RepairRule rule) const {
    return std::find(rules_applied.begin(), rules_applied.end(), rule) != rules_applied.end();
}

json to_json(const RepairResult& r) {
    json rules = json::array();
    for (auto rule : r.rules_applied) rules.push_back(to_string(rule));
    json status{{"pass", r.compile_status.pass}};
    if (!r.compile_status.pass) status["message"] = r.compile_status.message;
    return json{{"prompt_id", r.prompt_id},   {"sample_index", r.sample_index}, {"model_name", r.model_name},
                {"temperature", r.temperature}, {"code", r.code},               {"rules_applied", rules},
                {"compile_status", status},   {"raw_output", r.raw_output}};
}

RepairResult repair_result_from_json(const json& j) {
    try {
        RepairResult r;
        r.prompt_id = j.at("prompt_id").get<std::string>();
        r.sample_index = j.at("sample_index").get<int>();
        r.model_name = j.at("model_name").get<std::string>();
        r.temperature = j.at("temperature").get<double>();
        r.code = j.at("code").get<std::string>();
        for (const auto& rule : j.at("rules_applied")) {
            const auto name = rule.get<std::string>();
            if (name == "R1") r.rules_applied.push_back(RepairRule::R1);
            else if (name == "R2") r.rules_applied.push_back(RepairRule::R2);
            else if (name == "R3") r.rules_applied.push_back(RepairRule::R3);
            else throw IoError("unknown repair rule '" + name + "'");
        }
        const auto& status = j.at("compile_status");
        r.compile_status = status.at("pass").get<bool>() ? CompileStatus::Pass()
                                                         : CompileStatus::Fail(status.value("message", std::string()));
        r.raw_output = j.at("raw_output").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed repair record: ") + e.what());
    }
}

RepairedText apply_repair_rules(std::string_view raw, const Prompt& p) {
    RepairedText out;
    Extracted r1 = extract_code_block(raw);
    if (r1.fired) out.rules_applied.push_back(RepairRule::R1);

    Rewritten r2 = ensure_prompt_prefix(r1.text, p);
    if (r2.fired) out.rules_applied.push_back(RepairRule::R2);

    Rewritten r3 = truncate_extra_code(r2.text, retained_prompt_length(r2.text, p));
    if (r3.fired) out.rules_applied.push_back(RepairRule::R3);

    out.code = std::move(r3.text);
    return out;
}

RepairResult repair(const GeneratedSample& sample, const Prompt& p, const SyntaxChecker& toolchain) {
    RepairedText text = apply_repair_rules(sample.raw_output, p);
    RepairResult r;
    r.prompt_id = sample.prompt_id;
    r.sample_index = sample.sample_index;
    r.model_name = sample.model_name;
    r.temperature = sample.temperature;
    r.compile_status = syntax_check(text.code, toolchain);
    r.code = std::move(text.code);
    r.rules_applied = std::move(text.rules_applied);
    r.raw_output = sample.raw_output;
    return r;
}

}  // namespace sallm
