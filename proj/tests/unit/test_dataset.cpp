#include <gtest/gtest.h>

#include <fstream>

#include "sallm/dataset.hpp"
#include "sallm/error.hpp"
#include "sallm/io.hpp"
#include "sallm/process.hpp"
#include "test_support.hpp"

using namespace sallm;
namespace fs = std::filesystem;
using sallm::testing::fixtures;

namespace {

void copy_fixture(const fs::path& dest) {
    fs::copy(fixtures() / "dataset", dest, fs::copy_options::recursive);
}

json prompt_json(const fs::path& root, const std::string& id) {
    return json::parse(read_file(root / id / "prompt.json"));
}

void write_prompt_json(const fs::path& root, const std::string& id, const json& j) {
    write_file_atomic(root / id / "prompt.json", j.dump(2));
}

}  // namespace

TEST(Dataset, LoadsFixturesSortedById) {
    Dataset d = load_dataset(fixtures() / "dataset", SyntaxChecker());
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d.prompts[0].id, "A_cwe328_0");
    EXPECT_EQ(d.prompts[1].id, "A_cwe89_0");
    EXPECT_EQ(d.prompts[2].id, "A_cwe918_0");
    const Prompt* p = d.find("A_cwe918_0");
    ASSERT_NE(p, nullptr);
    EXPECT_EQ(p->cwe_id, "CWE-918");
    EXPECT_TRUE(p->insecure_solution.starts_with(p->code_prompt));
    EXPECT_EQ(p->test_ref.filename(), "test_A_cwe918_0.py");
    EXPECT_TRUE(fs::exists(p->env_ref / "Dockerfile"));
    EXPECT_EQ(d.find("nope"), nullptr);
}

TEST(Dataset, RenderPromptIsByteIdentical) {
    const Dataset d = load_dataset(fixtures() / "dataset", SyntaxChecker());
    for (const auto& p : d.prompts) {
        const json raw = prompt_json(fixtures() / "dataset", p.id);
        EXPECT_EQ(render_prompt(p, PromptStyle::Code), raw.at("code_prompt").get<std::string>());
        EXPECT_EQ(render_prompt(p, PromptStyle::Text), raw.at("text_prompt").get<std::string>());
    }
}

TEST(Dataset, MissingSolutionNamesPromptAndFile) {
    TempDir tmp;
    copy_fixture(tmp.path() / "ds");
    fs::remove(tmp.path() / "ds" / "A_cwe89_0" / "insecure_solution.py");
    try {
        load_dataset(tmp.path() / "ds", SyntaxChecker());
        FAIL();
    } catch (const MissingFile& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("A_cwe89_0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("insecure_solution.py"), std::string::npos) << msg;
    }
}

TEST(Dataset, ValidationFindings) {
    TempDir tmp;
    copy_fixture(tmp.path() / "ds");
    const fs::path root = tmp.path() / "ds";
    json j = prompt_json(root, "A_cwe89_0");
    j["cwe_id"] = "CWE89";
    write_prompt_json(root, "A_cwe89_0", j);
    Prompt p = read_prompt_dir(root / "A_cwe89_0");
    ValidationReport report = validate_prompt(p, SyntaxChecker());
    EXPECT_TRUE(report.has("malformed CWE id"));
    EXPECT_THROW(load_dataset(root, SyntaxChecker()), SchemaError);

    p.cwe_id = "CWE-89";
    p.insecure_solution = "def broken(:\n";
    EXPECT_TRUE(validate_prompt(p, SyntaxChecker()).has("insecure solution not compilable"));

    p.insecure_solution = "x = 1\n";
    p.code_prompt = " \n";
    EXPECT_TRUE(validate_prompt(p, SyntaxChecker()).has("empty code prompt"));
}

TEST(Dataset, UnknownKeyIsSchemaError) {
    TempDir tmp;
    copy_fixture(tmp.path() / "ds");
    json j = prompt_json(tmp.path() / "ds", "A_cwe918_0");
    j["difficulty"] = "easy";
    write_prompt_json(tmp.path() / "ds", "A_cwe918_0", j);
    EXPECT_THROW(read_prompt_dir(tmp.path() / "ds" / "A_cwe918_0"), SchemaError);
}

TEST(Dataset, DuplicateIdRejected) {
    TempDir tmp;
    copy_fixture(tmp.path() / "ds");
    fs::copy(tmp.path() / "ds" / "A_cwe89_0", tmp.path() / "ds" / "B_copy", fs::copy_options::recursive);
    EXPECT_THROW(load_dataset(tmp.path() / "ds", SyntaxChecker()), DuplicateId);
}

TEST(Dataset, DigestTracksContent) {
    TempDir tmp;
    copy_fixture(tmp.path() / "ds");
    const fs::path root = tmp.path() / "ds";
    const std::string before = dataset_digest(load_dataset(root, SyntaxChecker()));
    EXPECT_EQ(before, dataset_digest(load_dataset(fixtures() / "dataset", SyntaxChecker())));
    std::ofstream(root / "A_cwe89_0" / "env" / "requirements.txt", std::ios::app) << "requests==2.31.0\n";
    EXPECT_NE(before, dataset_digest(load_dataset(root, SyntaxChecker())));
}

TEST(Dataset, WellFormedCwe) {
    EXPECT_TRUE(is_well_formed_cwe("CWE-918"));
    EXPECT_FALSE(is_well_formed_cwe("CWE-0918"));
    EXPECT_FALSE(is_well_formed_cwe("CWE-"));
    EXPECT_FALSE(is_well_formed_cwe("cwe-89"));
    EXPECT_FALSE(is_well_formed_cwe("CWE-0"));
}
