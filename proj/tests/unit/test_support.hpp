#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "sallm/dataset.hpp"
#include "sallm/syntax_checker.hpp"

namespace sallm::testing {

inline std::filesystem::path source_dir() { return SALLM_SOURCE_DIR; }
inline std::filesystem::path fixtures() { return source_dir() / "fixtures"; }
inline std::filesystem::path fakes() { return source_dir() / "tests" / "fakes"; }

inline const Dataset& fixture_dataset() {
    static const Dataset d = load_dataset(fixtures() / "dataset", SyntaxChecker());
    return d;
}

inline const Prompt& fixture_prompt(const std::string& id) {
    const Prompt* p = fixture_dataset().find(id);
    if (!p) throw std::runtime_error("no fixture prompt " + id);
    return *p;
}

// Sets an environment variable for the lifetime of the object.
class ScopedEnv {
public:
    ScopedEnv(std::string name, const std::optional<std::string>& value) : name_(std::move(name)) {
        if (const char* old = std::getenv(name_.c_str())) old_ = old;
        if (value) ::setenv(name_.c_str(), value->c_str(), 1);
        else ::unsetenv(name_.c_str());
    }
    ~ScopedEnv() {
        if (old_) ::setenv(name_.c_str(), old_->c_str(), 1);
        else ::unsetenv(name_.c_str());
    }
    ScopedEnv(const ScopedEnv&) = delete;
    ScopedEnv& operator=(const ScopedEnv&) = delete;

private:
    std::string name_;
    std::optional<std::string> old_;
};

}  // namespace sallm::testing
