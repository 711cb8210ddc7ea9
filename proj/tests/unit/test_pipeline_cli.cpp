#include <gtest/gtest.h>

#include "sallm/error.hpp"
#include "sallm/io.hpp"
#include "sallm/pipeline.hpp"
#include "sallm/process.hpp"
#include "test_support.hpp"

using namespace sallm;
using sallm::testing::fakes;
using sallm::testing::fixtures;
using sallm::testing::ScopedEnv;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SALLM_CLI;

RunConfig static_config(const fs::path& out) {
    RunConfig cfg;
    cfg.dataset_root = fixtures() / "dataset";
    cfg.provider.kind = ProviderKind::Replay;
    cfg.provider.replay_path = fixtures() / "replay" / "store.jsonl";
    cfg.model_name = "fixture-model";
    cfg.temperatures = {0.0, 0.4};
    cfg.n_samples = 5;
    cfg.ks = {1, 3, 5};
    cfg.mode = AssessmentMode::Static;
    cfg.static_backend = StaticBackend::Builtin;
    cfg.output_dir = out;
    cfg.jobs = 2;
    return cfg;
}

ProcessResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), kCli);
    return run_process(args, {.timeout = std::chrono::seconds(60)});
}

std::vector<std::string> replay_args(const fs::path& out) {
    return {"--dataset", (fixtures() / "dataset").string(), "--provider", "replay", "--replay",
            (fixtures() / "replay" / "store.jsonl").string(), "--model", "fixture-model", "--out", out.string()};
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

TEST(ConfigParsing, Temperatures) {
    EXPECT_EQ(parse_temperatures("0.0,0.2,1"), (std::vector<double>{0.0, 0.2, 1.0}));
    EXPECT_EQ(parse_temperatures(" 0.4 , 0.6"), (std::vector<double>{0.4, 0.6}));
    EXPECT_THROW(parse_temperatures(""), ConfigError);
    EXPECT_THROW(parse_temperatures("0.2,,0.4"), ConfigError);
    EXPECT_THROW(parse_temperatures("warm"), ConfigError);
    EXPECT_EQ(parse_ks("1,3,5"), (std::vector<int>{1, 3, 5}));
    EXPECT_THROW(parse_ks("1.5"), ConfigError);
}

TEST(ConfigParsing, Validation) {
    TempDir tmp("cfg");
    RunConfig cfg = static_config(tmp.path());
    EXPECT_NO_THROW(cfg.validate());
    cfg.temperatures = {0.2, 1.2};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.temperatures = {0.2, 0.2};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = static_config(tmp.path());
    cfg.ks = {6};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = static_config(tmp.path());
    cfg.mode = AssessmentMode::Both;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.shim = fakes() / "fake_shim.py";
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunId, DerivedFromOutputRelevantConfigOnly) {
    TempDir a("id-a"), b("id-b");
    RunConfig x = static_config(a.path());
    RunConfig y = static_config(b.path());
    y.jobs = 7;
    const std::string digest = "d";
    EXPECT_EQ(derive_run_id(canonical_config(x, digest)), derive_run_id(canonical_config(y, digest)));
    y.n_samples = 4;
    EXPECT_NE(derive_run_id(canonical_config(x, digest)), derive_run_id(canonical_config(y, digest)));
    EXPECT_NE(derive_run_id(canonical_config(x, digest)), derive_run_id(canonical_config(x, "e")));
    const std::string id = derive_run_id(canonical_config(x, digest));
    EXPECT_EQ(id.size(), 16u);
    EXPECT_EQ(id.rfind("run-", 0), 0u);
}

TEST(PipelineRun, ResumeRerunsOnlyWhatChanged) {
    TempDir tmp("resume");
    {
        Pipeline p(static_config(tmp.path()));
        p.run_all();
        EXPECT_EQ(p.log().ran, (std::vector<std::string>{"generate", "repair", "assess", "score", "report"}));
        for (const char* f : {"run.json", "manifest.json", "generations.jsonl", "repairs.jsonl", "verdicts.jsonl",
                              "report.json", "report.csv", "report.md"}) {
            EXPECT_TRUE(fs::exists(p.run_dir() / f)) << f;
        }
        EXPECT_EQ(read_jsonl(p.run_dir() / "generations.jsonl").size(), 30u);
    }
    Pipeline again(static_config(tmp.path()));
    const std::string before = read_file(again.run_dir() / "report.json");
    fs::remove(again.run_dir() / "report.json");
    again.run_all();
    EXPECT_EQ(again.log().skipped, (std::vector<std::string>{"generate", "repair", "assess", "report"}));
    EXPECT_EQ(again.log().ran, (std::vector<std::string>{"score"}));
    EXPECT_EQ(read_file(again.run_dir() / "report.json"), before);

    Pipeline third(static_config(tmp.path()));
    fs::remove(third.run_dir() / "report.md");
    third.run_all();
    EXPECT_EQ(third.log().ran, (std::vector<std::string>{"report"}));

    Pipeline fourth(static_config(tmp.path()));
    std::string gens = read_file(fourth.run_dir() / "generations.jsonl");
    write_file_atomic(fourth.run_dir() / "generations.jsonl", gens + "\n");
    fourth.run_all();
    EXPECT_EQ(fourth.log().ran.front(), "generate");
}

TEST(PipelineRun, ConflictingRunIdNeedsForce) {
    TempDir tmp("conflict");
    RunConfig cfg = static_config(tmp.path());
    cfg.run_id = "fixed";
    Pipeline(cfg).generate();
    cfg.n_samples = 4;
    cfg.ks = {1, 3};
    EXPECT_THROW(Pipeline{cfg}, ConfigError);
    Pipeline forced(cfg, true);
    forced.generate();
    EXPECT_EQ(forced.log().ran, std::vector<std::string>{"generate"});
    EXPECT_EQ(read_jsonl(forced.run_dir() / "generations.jsonl").size(), 24u);
}

TEST(PipelineRun, DynamicThroughContainerRuntime) {
    TempDir tmp("dyn");
    TempDir state("dyn-state");
    ScopedEnv docker_state("FAKE_DOCKER_STATE", state.path().string());
    RunConfig cfg = static_config(tmp.path());
    cfg.temperatures = {0.0};
    cfg.n_samples = 2;
    cfg.ks = {1, 2};
    cfg.mode = AssessmentMode::Both;
    cfg.container_runtime = (fakes() / "docker").string();
    cfg.shim = fakes() / "fake_shim.py";
    Pipeline p(cfg);
    p.run_all();
    auto verdicts = read_jsonl(p.run_dir() / "verdicts.jsonl");
    ASSERT_EQ(verdicts.size(), 6u);
    for (const auto& v : verdicts) {
        EXPECT_TRUE(v.contains("dynamic")) << v.dump();
        EXPECT_TRUE(v.contains("static")) << v.dump();
    }
    json assess = json::parse(read_file(p.run_dir() / "assess.json"));
    EXPECT_EQ(assess.at("images_built"), 3);
    json report = json::parse(read_file(p.run_dir() / "report.json"));
    std::set<std::string> channels;
    for (const auto& m : report.at("temperatures").at(0).at("metrics")) channels.insert(m.at("channel").get<std::string>());
    EXPECT_EQ(channels, (std::set<std::string>{"functional", "static", "dynamic", "harmonic"}));
}

TEST(PipelineRun, DynamicRuntimeDownFailsAssessDynamic) {
    TempDir tmp("dyn-down");
    ScopedEnv down("FAKE_DOCKER_DOWN", "1");
    RunConfig cfg = static_config(tmp.path());
    cfg.mode = AssessmentMode::Dynamic;
    cfg.container_runtime = (fakes() / "docker").string();
    cfg.shim = fakes() / "fake_shim.py";
    Pipeline p(cfg);
    p.generate();
    p.repair();
    try {
        p.assess();
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "assess_dynamic");
        EXPECT_EQ(e.cause_kind(), "RuntimeUnavailable");
    }
}

TEST(Cli, GenerateWritesOneRecordPerSample) {
    TempDir tmp("cli-gen");
    auto args = replay_args(tmp.path());
    args.insert(args.begin(), "generate");
    for (const char* a : {"--temperatures", "0.4", "--samples", "2", "--k", "1,2", "--mode", "static", "-q"}) {
        args.push_back(a);
    }
    auto res = cli(args);
    ASSERT_EQ(res.exit_code, 0) << res.err;
    fs::path run_dir = trim(res.out);
    EXPECT_EQ(run_dir.parent_path(), tmp.path());
    EXPECT_EQ(read_jsonl(run_dir / "generations.jsonl").size(), 6u);
    EXPECT_FALSE(fs::exists(run_dir / "repairs.jsonl"));
}

TEST(Cli, FullStaticRun) {
    TempDir tmp("cli-run");
    auto args = replay_args(tmp.path());
    args.insert(args.begin(), "run");
    for (const char* a : {"--temperatures", "0.0,0.4", "--samples", "5", "--mode", "static", "--static-backend",
                          "builtin"}) {
        args.push_back(a);
    }
    auto res = cli(args);
    ASSERT_EQ(res.exit_code, 0) << res.err;
    EXPECT_NE(res.err.find("[sallm]"), std::string::npos);
    fs::path run_dir = trim(res.out);
    EXPECT_TRUE(fs::exists(run_dir / "report.md"));
    auto again = cli(args);
    EXPECT_EQ(again.exit_code, 0) << again.err;
    EXPECT_EQ(trim(again.out), run_dir.string());
}

TEST(Cli, MissingApiKeyIsConfigExit) {
    TempDir tmp("cli-auth");
    ScopedEnv unset("SALLM_API_KEY", std::nullopt);
    auto res = cli({"generate", "--dataset", (fixtures() / "dataset").string(), "--provider", "http-chat",
                    "--endpoint", "http://127.0.0.1:9/v1", "--model", "m", "--mode", "static", "--out",
                    tmp.path().string()});
    EXPECT_EQ(res.exit_code, 2) << res.err;
    EXPECT_NE(res.err.find("SALLM_API_KEY"), std::string::npos);
}

TEST(Cli, BadFlagsAreConfigExit) {
    TempDir tmp("cli-bad");
    auto args = replay_args(tmp.path());
    args.insert(args.begin(), "generate");
    args.push_back("--temperatures");
    args.push_back("hot");
    EXPECT_EQ(cli(args).exit_code, 2);
    EXPECT_EQ(cli({"generate", "--no-such-flag"}).exit_code, 2);
    EXPECT_EQ(cli({"generate", "--model", "m"}).exit_code, 2);
}

TEST(Cli, HelpForEverySubcommand) {
    EXPECT_EQ(cli({"--help"}).exit_code, 0);
    for (const char* sub : {"validate", "generate", "repair", "assess", "score", "report", "run"}) {
        auto res = cli({sub, "--help"});
        EXPECT_EQ(res.exit_code, 0) << sub;
        EXPECT_NE(res.out.find("--"), std::string::npos) << sub;
    }
}

TEST(Cli, ExternalAnalyzerMissingNamesStage) {
    TempDir tmp("cli-ext");
    auto args = replay_args(tmp.path());
    args.insert(args.begin(), "run");
    for (const char* a : {"--temperatures", "0.0", "--samples", "2", "--k", "1", "--mode", "static",
                          "--static-backend", "external", "--analyzer-path", "/nonexistent/codeql", "-q"}) {
        args.push_back(a);
    }
    auto res = cli(args);
    EXPECT_EQ(res.exit_code, 1);
    EXPECT_NE(res.err.find("assess_static"), std::string::npos) << res.err;
    EXPECT_NE(res.err.find("AnalyzerMissing"), std::string::npos) << res.err;
}

TEST(Cli, ExternalAnalyzerViaAdapter) {
    TempDir tmp("cli-fake-ext");
    auto args = replay_args(tmp.path());
    args.insert(args.begin(), "run");
    const std::string analyzer = (fakes() / "fake_codeql.py").string();
    for (const char* a : {"--temperatures", "0.0", "--samples", "5", "--mode", "static", "--static-backend",
                          "external", "-q"}) {
        args.push_back(a);
    }
    args.push_back("--analyzer-path");
    args.push_back(analyzer);
    auto res = cli(args);
    ASSERT_EQ(res.exit_code, 0) << res.err;
    json report = json::parse(read_file(fs::path(trim(res.out)) / "report.json"));
    EXPECT_EQ(report.at("static_backend"), "external");
}

TEST(Cli, ValidateDataset) {
    auto res = cli({"validate", "--dataset", (fixtures() / "dataset").string()});
    EXPECT_EQ(res.exit_code, 0) << res.err;
    EXPECT_NE(res.out.find("3 prompts valid"), std::string::npos);
    EXPECT_EQ(cli({"validate", "--dataset", "/nonexistent"}).exit_code, 1);
}
