#include "sallm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include "sallm/assess_dynamic.hpp"
#include "sallm/digest.hpp"
#include "sallm/error.hpp"
#include "sallm/parallel.hpp"
#include "sallm/repair.hpp"

namespace sallm {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunFile = "run.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kGenerationsFile = "generations.jsonl";
constexpr const char* kRepairsFile = "repairs.jsonl";
constexpr const char* kVerdictsFile = "verdicts.jsonl";
constexpr const char* kAssessFile = "assess.json";
constexpr const char* kReportJson = "report.json";
constexpr const char* kReportCsv = "report.csv";
constexpr const char* kReportMd = "report.md";

// Concurrent external analyzer processes; each one is memory hungry.
constexpr int kExternalAnalyzerSlots = 2;

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split_commas(std::string_view list) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in{std::string(list)};
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

std::string optional_file_digest(const fs::path& p) { return p.empty() ? std::string() : sha256_file(p); }

}  // namespace

std::string_view to_string(StaticBackend b) {
    switch (b) {
        case StaticBackend::Auto: return "auto";
        case StaticBackend::External: return "external";
        case StaticBackend::Builtin: return "builtin";
    }
    return "auto";
}

StaticBackend static_backend_from_string(std::string_view s) {
    if (s == "auto") return StaticBackend::Auto;
    if (s == "external") return StaticBackend::External;
    if (s == "builtin") return StaticBackend::Builtin;
    throw ConfigError("unknown static backend '" + std::string(s) + "'");
}

std::vector<double> parse_temperatures(std::string_view list) {
    std::vector<double> out;
    for (const auto& item : split_commas(list)) {
        char* end = nullptr;
        double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("bad temperature '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("no temperatures given");
    return out;
}

std::vector<int> parse_ks(std::string_view list) {
    std::vector<int> out;
    for (const auto& item : split_commas(list)) {
        char* end = nullptr;
        long v = std::strtol(item.c_str(), &end, 10);
        if (item.empty() || *end != '\0') throw ConfigError("bad k '" + item + "'");
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ConfigError("no k values given");
    return out;
}

void RunConfig::validate() const {
    if (dataset_root.empty()) throw ConfigError("--dataset is required");
    if (model_name.empty()) throw ConfigError("--model is required");
    provider.validate();
    if (temperatures.empty()) throw ConfigError("no temperatures given");
    for (double t : temperatures) {
        if (t < 0.0 || t > 1.0) throw ConfigError("temperature " + format_fixed(t, 2) + " outside [0, 1]");
    }
    for (size_t i = 0; i < temperatures.size(); ++i) {
        for (size_t j = i + 1; j < temperatures.size(); ++j) {
            if (std::abs(temperatures[i] - temperatures[j]) < 1e-9) throw ConfigError("duplicate temperature");
        }
    }
    if (n_samples < 1) throw ConfigError("--samples must be at least 1");
    if (ks.empty()) throw ConfigError("no k values given");
    for (int k : ks) {
        if (k < 1 || k > n_samples) {
            throw ConfigError("k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n_samples) + "]");
        }
    }
    if (max_new_tokens && *max_new_tokens < 1) throw ConfigError("--max-new-tokens must be positive");
    if (timeout.count() < 1) throw ConfigError("--timeout must be positive");
    if (jobs < 0) throw ConfigError("--jobs must not be negative");
    if (assesses_dynamic(mode) && shim.empty()) throw ConfigError("dynamic assessment needs --shim");
}

int RunConfig::effective_jobs() const {
    if (jobs > 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

int RunConfig::effective_max_new_tokens() const {
    return max_new_tokens ? *max_new_tokens : default_max_new_tokens(provider.kind);
}

json canonical_config(const RunConfig& cfg, const std::string& dataset_digest) {
    json provider = {{"kind", to_string(cfg.provider.kind)}};
    if (cfg.provider.kind == ProviderKind::Replay) {
        provider["replay_digest"] = cfg.provider.replay_path ? sha256_file(*cfg.provider.replay_path) : "";
    } else {
        provider["endpoint"] = cfg.provider.endpoint.value_or("");
    }
    json c = {{"dataset_digest", dataset_digest},
              {"provider", provider},
              {"model", cfg.model_name},
              {"temperatures", cfg.temperatures},
              {"n_samples", cfg.n_samples},
              {"ks", cfg.ks},
              {"max_new_tokens", cfg.effective_max_new_tokens()},
              {"prompt_style", to_string(cfg.prompt_style)},
              {"assessment_mode", to_string(cfg.mode)},
              {"match_mode", to_string(cfg.match_mode)}};
    if (assesses_static(cfg.mode)) {
        c["static_backend"] = to_string(cfg.static_backend);
        c["rule_registry_digest"] = optional_file_digest(cfg.rule_registry);
        c["cwe_aliases_digest"] = optional_file_digest(cfg.cwe_aliases);
    }
    if (assesses_dynamic(cfg.mode)) {
        c["timeout_s"] = cfg.timeout.count();
        c["shim_digest"] = optional_file_digest(cfg.shim);
    }
    return c;
}

std::string derive_run_id(const json& canonical) { return "run-" + sha256_hex(canonical.dump()).substr(0, 12); }

// --- manifest ------------------------------------------------------------------

Manifest Manifest::load(const fs::path& file) {
    Manifest m;
    if (!fs::exists(file)) return m;
    try {
        m.doc_ = json::parse(read_file(file));
    } catch (const json::parse_error&) {
        // A corrupt manifest only costs a rerun.
        m.doc_ = json::object();
    }
    if (!m.doc_.is_object()) m.doc_ = json::object();
    return m;
}

void Manifest::save(const fs::path& file) const { write_file_atomic(file, doc_.dump(2) + "\n"); }

bool Manifest::up_to_date(const std::string& stage, const std::string& input_digest, const fs::path& dir) const {
    auto it = doc_.find(stage);
    if (it == doc_.end() || !it->is_object()) return false;
    if (it->value("input", "") != input_digest) return false;
    auto outputs = it->find("outputs");
    if (outputs == it->end() || !outputs->is_object()) return false;
    for (const auto& [name, digest] : outputs->items()) {
        const fs::path file = dir / name;
        if (!fs::exists(file) || !digest.is_string() || sha256_file(file) != digest.get<std::string>()) return false;
    }
    return true;
}

void Manifest::record(const std::string& stage, const std::string& input_digest, const fs::path& dir,
                      const std::vector<std::string>& outputs) {
    json out = json::object();
    for (const auto& name : outputs) out[name] = sha256_file(dir / name);
    doc_[stage] = {{"input", input_digest}, {"outputs", out}};
}

void Manifest::forget(const std::string& stage) { doc_.erase(stage); }

// --- pipeline --------------------------------------------------------------------

Pipeline::Pipeline(RunConfig cfg, bool force) : cfg_(std::move(cfg)), toolchain_(cfg_.interpreter) {
    cfg_.validate();
    try {
        dataset_ = load_dataset(cfg_.dataset_root, toolchain_);
    } catch (const Error& e) {
        throw StageError("dataset", e);
    }
    if (dataset_.size() == 0) throw StageError("dataset", EmptyDataset("no prompts under " + cfg_.dataset_root.string()));
    dataset_digest_ = dataset_digest(dataset_);
    canonical_ = canonical_config(cfg_, dataset_digest_);
    if (cfg_.run_id.empty()) cfg_.run_id = derive_run_id(canonical_);

    run_dir_ = cfg_.output_dir / cfg_.run_id;
    manifest_path_ = run_dir_ / kManifestFile;
    fs::create_directories(run_dir_);

    const json run_doc = {{"run_id", cfg_.run_id}, {"config", canonical_}};
    const fs::path run_file = run_dir_ / kRunFile;
    if (fs::exists(run_file)) {
        json existing;
        try {
            existing = json::parse(read_file(run_file));
        } catch (const json::parse_error&) {
        }
        if (existing != run_doc) {
            if (!force) {
                throw ConfigError("run directory " + run_dir_.string() +
                                  " holds a run with a different configuration; pass --force or choose another --run-id");
            }
            fs::remove(manifest_path_);
        }
    }
    write_file_atomic(run_file, run_doc.dump(2) + "\n");
    manifest_ = Manifest::load(manifest_path_);
}

void Pipeline::progress(const std::string& msg) const {
    if (on_progress) on_progress(msg);
}

std::string Pipeline::file_digest(const std::string& name) const {
    const fs::path file = run_dir_ / name;
    if (!fs::exists(file)) throw IoError(file.string() + " does not exist; run the earlier stages first");
    return sha256_file(file);
}

template <typename Fn>
void Pipeline::stage(const char* name, const std::string& input_digest, const std::vector<std::string>& outputs,
                     Fn&& body) {
    if (manifest_.up_to_date(name, input_digest, run_dir_)) {
        log_.skipped.push_back(name);
        progress(std::string(name) + ": up to date");
        return;
    }
    progress(std::string(name) + ": running");
    manifest_.forget(name);
    try {
        body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
    manifest_.record(name, input_digest, run_dir_, outputs);
    manifest_.save(manifest_path_);
    log_.ran.push_back(name);
}

void Pipeline::generate() {
    stage(kStageGenerate, sha256_hex(canonical_.dump()), {kGenerationsFile}, [&] {
        std::vector<GenerationRequest> reqs;
        for (double t : cfg_.temperatures) {
            for (const auto& p : dataset_.prompts) {
                GenerationRequest req;
                req.prompt_id = p.id;
                req.prompt_text = render_prompt(p, cfg_.prompt_style);
                req.n_samples = cfg_.n_samples;
                req.temperature = t;
                req.max_new_tokens = cfg_.effective_max_new_tokens();
                req.model_name = cfg_.model_name;
                reqs.push_back(std::move(req));
            }
        }
        auto provider = make_provider(cfg_.provider);
        auto batches = generate_all(*provider, reqs, cfg_.provider.max_in_flight);
        std::vector<json> rows;
        for (const auto& batch : batches) {
            for (const auto& s : batch) rows.push_back(to_json(s));
        }
        write_jsonl(run_dir_ / kGenerationsFile, rows);
        progress("generate: " + std::to_string(rows.size()) + " samples");
    });
}

void Pipeline::repair() {
    stage(kStageRepair, file_digest(kGenerationsFile), {kRepairsFile}, [&] {
        std::vector<GeneratedSample> samples = read_samples(run_dir_ / kGenerationsFile);
        std::vector<json> rows(samples.size());
        parallel_for(samples.size(), cfg_.effective_jobs(), [&](size_t i) {
            const Prompt* p = dataset_.find(samples[i].prompt_id);
            if (!p) throw SchemaError("generation for unknown prompt " + samples[i].prompt_id);
            rows[i] = to_json(sallm::repair(samples[i], *p, toolchain_));
        });
        write_jsonl(run_dir_ / kRepairsFile, rows);
        const auto excluded = std::count_if(rows.begin(), rows.end(),
                                            [](const json& r) { return !repair_result_from_json(r).compile_status.pass; });
        progress("repair: " + std::to_string(rows.size()) + " samples, " + std::to_string(excluded) + " not compilable");
    });
}

void Pipeline::assess() {
    const std::string input = sha256_hex(file_digest(kRepairsFile) + canonical_.dump());
    stage(kStageAssess, input, {kVerdictsFile, kAssessFile}, [&] {
        std::vector<RepairResult> repairs;
        for (const auto& row : read_jsonl(run_dir_ / kRepairsFile)) repairs.push_back(repair_result_from_json(row));

        std::vector<SampleVerdict> verdicts(repairs.size());
        for (size_t i = 0; i < repairs.size(); ++i) {
            verdicts[i].prompt_id = repairs[i].prompt_id;
            verdicts[i].temperature = repairs[i].temperature;
            verdicts[i].sample_index = repairs[i].sample_index;
            verdicts[i].excluded = repairs[i].excluded();
        }
        auto prompt_of = [&](const RepairResult& r) -> const Prompt& {
            const Prompt* p = dataset_.find(r.prompt_id);
            if (!p) throw SchemaError("repair for unknown prompt " + r.prompt_id);
            return *p;
        };

        json assess_doc = {{"assessment_mode", to_string(cfg_.mode)}};
        if (assesses_static(cfg_.mode)) {
            try {
                const RuleRegistry registry =
                    cfg_.rule_registry.empty() ? RuleRegistry::builtin() : RuleRegistry::load(cfg_.rule_registry);
                const CweAliases aliases =
                    cfg_.cwe_aliases.empty() ? CweAliases::defaults() : CweAliases::load(cfg_.cwe_aliases);
                AnalyzerConfig acfg;
                acfg.binary = resolve_analyzer_binary(cfg_.analyzer_path);

                StaticBackend backend = cfg_.static_backend;
                if (backend == StaticBackend::Auto) {
                    backend = executable_available(acfg.binary) ? StaticBackend::External : StaticBackend::Builtin;
                }
                if (backend == StaticBackend::External && !executable_available(acfg.binary)) {
                    throw AnalyzerMissing("static analyzer '" + acfg.binary +
                                          "' not found and the builtin fallback is disabled (--static-backend external)");
                }
                assess_doc["static_backend"] = to_string(backend);
                progress("assess_static: backend " + std::string(to_string(backend)));

                if (backend == StaticBackend::Builtin) {
                    parallel_for(repairs.size(), cfg_.effective_jobs(), [&](size_t i) {
                        if (repairs[i].excluded()) return;
                        const Prompt& p = prompt_of(repairs[i]);
                        verdicts[i].static_verdict =
                            decide(builtin_scan(repairs[i].code, p.id + std::string(SyntaxChecker::extension)), p,
                                   cfg_.match_mode, aliases, repairs[i].sample_index);
                    });
                } else {
                    // One analyzer database per (temperature, prompt).
                    std::map<std::pair<double, std::string>, std::vector<size_t>> groups;
                    for (size_t i = 0; i < repairs.size(); ++i) {
                        if (!repairs[i].excluded()) groups[{repairs[i].temperature, repairs[i].prompt_id}].push_back(i);
                    }
                    std::vector<std::vector<size_t>> batches;
                    for (auto& [key, idx] : groups) batches.push_back(idx);
                    parallel_for(batches.size(), kExternalAnalyzerSlots, [&](size_t b) {
                        std::vector<RepairResult> batch;
                        for (size_t i : batches[b]) batch.push_back(repairs[i]);
                        const Prompt& p = prompt_of(batch.front());
                        auto findings = run_external_batch(batch, p, acfg, &registry);
                        for (size_t i : batches[b]) {
                            verdicts[i].static_verdict = decide(std::move(findings[repairs[i].sample_index]), p,
                                                                cfg_.match_mode, aliases, repairs[i].sample_index);
                        }
                    });
                }
            } catch (const Error& e) {
                throw StageError("assess_static", e);
            }
        }
        if (assesses_dynamic(cfg_.mode)) {
            try {
                DockerCliRuntime runtime(cfg_.container_runtime);
                EnvBuilder builder(runtime);
                DynamicConfig dcfg{cfg_.shim, cfg_.timeout, run_dir_ / "logs", "python3"};
                parallel_for(repairs.size(), cfg_.effective_jobs(), [&](size_t i) {
                    if (repairs[i].excluded()) return;
                    const Prompt& p = prompt_of(repairs[i]);
                    EnvSpec env = builder.build_env(p);
                    verdicts[i].dynamic_verdict = run_assessment(repairs[i], p, env, runtime, dcfg);
                });
                assess_doc["images_built"] = builder.builds_performed();
            } catch (const Error& e) {
                throw StageError("assess_dynamic", e);
            }
        }

        std::vector<json> rows;
        for (const auto& v : verdicts) rows.push_back(to_json(v));
        write_jsonl(run_dir_ / kVerdictsFile, rows);
        write_file_atomic(run_dir_ / kAssessFile, assess_doc.dump(2) + "\n");
    });
}

void Pipeline::score() {
    const std::string input = sha256_hex(file_digest(kVerdictsFile) + file_digest(kAssessFile) + canonical_.dump());
    stage(kStageScore, input, {kReportJson}, [&] {
        ReportInputs in;
        in.run_id = cfg_.run_id;
        in.model_name = cfg_.model_name;
        in.dataset_digest = dataset_digest_;
        in.static_backend = json::parse(read_file(run_dir_ / kAssessFile)).value("static_backend", "");
        in.mode = cfg_.mode;
        in.match_mode = cfg_.match_mode;
        in.temperatures = cfg_.temperatures;
        in.n_samples = cfg_.n_samples;
        in.ks = cfg_.ks;
        for (const auto& p : dataset_.prompts) in.prompt_ids.push_back(p.id);
        for (const auto& row : read_jsonl(run_dir_ / kVerdictsFile)) in.verdicts.push_back(sample_verdict_from_json(row));
        write_file_atomic(run_dir_ / kReportJson, report_to_json(build_report(in)).dump(2) + "\n");
    });
}

namespace {

MetricReport report_from_json(const json& j) {
    MetricReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.model_name = j.at("model").get<std::string>();
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    if (!j.at("static_backend").is_null()) r.static_backend = j.at("static_backend").get<std::string>();
    r.mode = assessment_mode_from_string(j.at("assessment_mode").get<std::string>());
    r.match_mode = match_mode_from_string(j.at("match_mode").get<std::string>());
    r.n_samples = j.at("n_samples").get<int>();
    r.ks = j.at("ks").get<std::vector<int>>();
    for (const auto& t : j.at("temperatures")) {
        TemperatureReport tr;
        tr.temperature = t.at("temperature").get<double>();
        tr.prompt_count = t.at("prompt_count").get<int>();
        tr.samples_requested = t.at("samples_requested").get<int>();
        tr.excluded_count = t.at("excluded_count").get<int>();
        tr.error_count = t.at("error_count").get<int>();
        for (const auto& m : t.at("metrics")) {
            const std::string ch = m.at("channel").get<std::string>();
            Channel channel = ch == "functional" ? Channel::Functional
                              : ch == "dynamic"  ? Channel::Dynamic
                              : ch == "harmonic" ? Channel::Harmonic
                                                 : Channel::Static;
            tr.metrics.push_back({m.at("metric").get<std::string>(), m.at("k").get<int>(), channel,
                                  m.at("value").get<double>()});
        }
        r.temperatures.push_back(std::move(tr));
    }
    return r;
}

}  // namespace

void Pipeline::report() {
    stage(kStageReport, file_digest(kReportJson), {kReportCsv, kReportMd}, [&] {
        MetricReport r;
        try {
            r = report_from_json(json::parse(read_file(run_dir_ / kReportJson)));
        } catch (const json::exception& e) {
            throw SchemaError(std::string("report.json: ") + e.what());
        }
        write_file_atomic(run_dir_ / kReportCsv, report_to_csv(r));
        write_file_atomic(run_dir_ / kReportMd, report_to_markdown(r));
    });
}

void Pipeline::run_all() {
    generate();
    repair();
    assess();
    score();
    report();
}

}  // namespace sallm
