#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sallm {

struct ProcessOptions {
    std::filesystem::path cwd;
    std::optional<std::chrono::milliseconds> timeout;
    std::string stdin_data;
    // Extra NAME=value pairs appended to the inherited environment.
    std::vector<std::string> extra_env;
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    // exec() itself failed (binary missing or not executable).
    bool spawn_failed = false;
    std::string out;
    std::string err;
    std::chrono::milliseconds elapsed{0};

    bool ok() const { return !spawn_failed && !timed_out && exit_code == 0; }
};

// Runs argv[0] (resolved through PATH) with captured stdout/stderr. On timeout
// the whole process group is killed.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts = {});

// True if `name` resolves to an executable, either as a path or through PATH.
bool executable_available(const std::string& name);

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "sallm");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    TempDir(TempDir&& other) noexcept;
    TempDir& operator=(TempDir&&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace sallm
