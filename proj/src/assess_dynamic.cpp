#include "sallm/assess_dynamic.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sallm/digest.hpp"
#include "sallm/error.hpp"

namespace sallm {

namespace fs = std::filesystem;

std::string image_tag_for(const fs::path& build_context) {
    return "sallm-env:" + sha256_tree(build_context).substr(0, 16);
}

std::string declared_network(const fs::path& build_context) {
    const fs::path file = build_context / kSandboxConfigFile;
    if (!fs::exists(file)) return "none";
    try {
        json doc = json::parse(read_file(file));
        std::string net = doc.value("network", "none");
        if (net != "none" && net != "bridge") throw ConfigError(file.string() + ": network must be none or bridge");
        return net;
    } catch (const json::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

std::string_view to_string(FunctionalOutcome o) {
    switch (o) {
        case FunctionalOutcome::Pass: return "pass";
        case FunctionalOutcome::Fail: return "fail";
        case FunctionalOutcome::Error: return "error";
    }
    return "error";
}

std::string_view to_string(SecurityOutcome o) {
    switch (o) {
        case SecurityOutcome::Secure: return "secure";
        case SecurityOutcome::Vulnerable: return "vulnerable";
        case SecurityOutcome::Error: return "error";
    }
    return "error";
}

FunctionalOutcome functional_from_string(std::string_view s) {
    if (s == "pass") return FunctionalOutcome::Pass;
    if (s == "fail") return FunctionalOutcome::Fail;
    if (s == "error") return FunctionalOutcome::Error;
    throw ShimProtocolError("unknown functional verdict '" + std::string(s) + "'");
}

SecurityOutcome security_from_string(std::string_view s) {
    if (s == "secure") return SecurityOutcome::Secure;
    if (s == "vulnerable") return SecurityOutcome::Vulnerable;
    if (s == "error") return SecurityOutcome::Error;
    throw ShimProtocolError("unknown security verdict '" + std::string(s) + "'");
}

json to_json(const DynamicVerdict& v) {
    return json{{"prompt_id", v.prompt_id},
                {"sample_index", v.sample_index},
                {"functional", to_string(v.functional)},
                {"functional_detail", v.functional_detail},
                {"security", to_string(v.security)},
                {"security_detail", v.security_detail},
                {"duration_s", v.duration_s},
                {"logs_ref", v.logs_ref.string()}};
}

DynamicVerdict dynamic_verdict_from_json(const json& j) {
    DynamicVerdict v;
    v.prompt_id = j.value("prompt_id", "");
    v.sample_index = j.value("sample_index", 0);
    v.functional = functional_from_string(j.at("functional").get<std::string>());
    v.functional_detail = j.value("functional_detail", "");
    v.security = security_from_string(j.at("security").get<std::string>());
    v.security_detail = j.value("security_detail", "");
    v.duration_s = j.value("duration_s", 0.0);
    v.logs_ref = j.value("logs_ref", "");
    return v;
}

ShimVerdict parse_shim_output(std::string_view text) {
    std::optional<std::string_view> body;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.starts_with(kVerdictSentinel)) {
            if (body) throw ShimProtocolError("more than one verdict line in shim output");
            body = line.substr(kVerdictSentinel.size());
        }
        pos = eol + 1;
    }
    if (!body) throw ShimProtocolError("no verdict line in shim output");

    json doc;
    try {
        doc = json::parse(*body);
    } catch (const json::parse_error& e) {
        throw ShimProtocolError(std::string("verdict is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ShimProtocolError("verdict is not a JSON object");
    auto text_field = [&](const char* key) -> std::string {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_string()) throw ShimProtocolError(std::string("verdict field '") + key + "' missing or not a string");
        return it->get<std::string>();
    };
    ShimVerdict v{functional_from_string(text_field("functional")), security_from_string(text_field("security")),
                  text_field("functional_detail"), text_field("security_detail"), 0};
    auto dur = doc.find("duration_ms");
    if (dur == doc.end() || !dur->is_number_integer() || dur->get<long long>() < 0) {
        throw ShimProtocolError("verdict field 'duration_ms' missing or not a non-negative integer");
    }
    v.duration_ms = dur->get<long long>();
    return v;
}

// --- docker CLI ----------------------------------------------------------------

bool DockerCliRuntime::available() {
    if (!executable_available(binary_)) return false;
    return run_process({binary_, "version"}, {.timeout = std::chrono::seconds(30)}).ok();
}

bool DockerCliRuntime::image_exists(const std::string& tag) {
    return run_process({binary_, "image", "inspect", tag}, {.timeout = std::chrono::seconds(30)}).ok();
}

ProcessResult DockerCliRuntime::build(const fs::path& context, const std::string& tag) {
    return run_process({binary_, "build", "-t", tag, context.string()});
}

ProcessResult DockerCliRuntime::run(const ContainerRun& spec) {
    std::vector<std::string> argv = {binary_, "run", "--rm", "--name", spec.name, "--network", spec.network, "-v",
                                     fs::absolute(spec.workspace).string() + ":/workspace", "-w", "/workspace",
                                     spec.image};
    argv.insert(argv.end(), spec.command.begin(), spec.command.end());
    ProcessResult res = run_process(argv, {.timeout = spec.timeout});
    if (res.timed_out) {
        // Killing the CLI client does not stop the container itself.
        run_process({binary_, "rm", "-f", spec.name}, {.timeout = std::chrono::seconds(30)});
    }
    return res;
}

// --- env builder ----------------------------------------------------------------

namespace {

std::string excerpt(const ProcessResult& r, size_t max_lines = 20) {
    std::string all = r.out;
    if (!all.empty() && all.back() != '\n') all += '\n';
    all += r.err;
    std::vector<std::string> lines;
    std::istringstream in(all);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    std::string out;
    for (size_t i = lines.size() > max_lines ? lines.size() - max_lines : 0; i < lines.size(); ++i) {
        out += lines[i] + "\n";
    }
    return out;
}

}  // namespace

EnvSpec EnvBuilder::build_env(const Prompt& p) {
    // Keyed by context digest too, so an edited context is rebuilt.
    const std::string key = p.id + "@" + image_tag_for(p.env_ref);
    std::promise<EnvSpec> mine;
    std::shared_future<EnvSpec> fut;
    {
        std::lock_guard lock(mu_);
        auto it = inflight_.find(key);
        if (it != inflight_.end()) {
            fut = it->second;
        } else {
            inflight_.emplace(key, mine.get_future().share());
        }
    }
    if (fut.valid()) return fut.get();
    try {
        EnvSpec spec = build_uncached(p);
        mine.set_value(spec);
        return spec;
    } catch (...) {
        mine.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        inflight_.erase(key);
        throw;
    }
}

EnvSpec EnvBuilder::build_uncached(const Prompt& p) {
    {
        std::lock_guard lock(mu_);
        if (available_ < 0) available_ = runtime_.available() ? 1 : 0;
        if (available_ == 0) throw RuntimeUnavailable("container runtime is not available");
    }
    EnvSpec spec{p.id, p.env_ref, image_tag_for(p.env_ref), declared_network(p.env_ref)};
    if (runtime_.image_exists(spec.image_tag)) return spec;
    ProcessResult res = runtime_.build(p.env_ref, spec.image_tag);
    {
        std::lock_guard lock(mu_);
        ++builds_;
    }
    if (res.spawn_failed) throw RuntimeUnavailable("cannot start container runtime: " + res.err);
    if (!res.ok()) throw BuildFailure("image build for " + p.id + " failed:\n" + excerpt(res));
    return spec;
}

int EnvBuilder::builds_performed() const {
    std::lock_guard lock(mu_);
    return builds_;
}

// --- assessment -----------------------------------------------------------------

namespace {

std::string container_name(const RepairResult& r) {
    static std::atomic<unsigned> counter{0};
    static const unsigned salt = std::random_device{}();
    std::string name = "sallm-";
    for (char c : r.prompt_id) {
        name += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') ? c : '_';
    }
    char suffix[64];
    std::snprintf(suffix, sizeof suffix, "-%d-%d-%08x-%u", r.sample_index, static_cast<int>(::getpid()), salt,
                  counter.fetch_add(1));
    return name + suffix;
}

}  // namespace

DynamicVerdict run_assessment(const RepairResult& r, const Prompt& p, const EnvSpec& env, ContainerRuntime& runtime,
                              const DynamicConfig& cfg) {
    if (r.excluded()) throw std::invalid_argument("sample " + std::to_string(r.sample_index) + " of " + r.prompt_id +
                                                  " did not compile and is not assessed");
    if (!fs::exists(cfg.shim)) throw ConfigError("test shim not found: " + cfg.shim.string());

    TempDir ws("sallm-ws");
    const std::string ext(SyntaxChecker::extension);
    std::ofstream(ws.path() / (p.id + ext), std::ios::binary) << r.code;
    fs::copy_file(p.test_ref, ws.path() / p.test_ref.filename());
    fs::copy_file(cfg.shim, ws.path() / kShimFileName);
    fs::permissions(ws.path(), fs::perms::all, fs::perm_options::add);
    for (const auto& entry : fs::directory_iterator(ws.path())) {
        fs::permissions(entry.path(), fs::perms::all, fs::perm_options::add);
    }

    ContainerRun run{env.image_tag, container_name(r), ws.path(), env.network,
                     {cfg.interpreter, std::string(kShimFileName), p.id},
                     std::chrono::duration_cast<std::chrono::milliseconds>(cfg.timeout)};
    ProcessResult res = runtime.run(run);

    DynamicVerdict v;
    v.prompt_id = r.prompt_id;
    v.sample_index = r.sample_index;
    v.duration_s = static_cast<double>(res.elapsed.count()) / 1000.0;

    if (!cfg.logs_dir.empty()) {
        fs::create_directories(cfg.logs_dir);
        v.logs_ref = cfg.logs_dir / (p.id + "_T" + format_fixed(r.temperature, 2) + "_" +
                                     std::to_string(r.sample_index) + ".log");
        write_file_atomic(v.logs_ref, "# exit " + std::to_string(res.exit_code) + (res.timed_out ? " (timeout)" : "") +
                                          "\n# stdout\n" + res.out + "\n# stderr\n" + res.err);
    }

    if (res.spawn_failed) throw RuntimeUnavailable("cannot start container runtime: " + res.err);
    if (res.timed_out) {
        v.functional = FunctionalOutcome::Error;
        v.security = SecurityOutcome::Error;
        v.functional_detail = v.security_detail = "timeout";
        return v;
    }
    ShimVerdict sv;
    try {
        sv = parse_shim_output(res.out);
    } catch (const ShimProtocolError& e) {
        throw ShimProtocolError(r.prompt_id + " sample " + std::to_string(r.sample_index) + ": " + e.what() +
                                " (exit " + std::to_string(res.exit_code) + ")");
    }
    v.functional = sv.functional;
    v.functional_detail = sv.functional_detail;
    v.security = sv.security;
    v.security_detail = sv.security_detail;
    return v;
}

}  // namespace sallm
