#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace sallm {

// Result of compiling subject-language source.
struct CompileStatus {
    bool pass = false;
    // First diagnostic line when !pass.
    std::string message;

    static CompileStatus Pass() { return {true, {}}; }
    static CompileStatus Fail(std::string msg) { return {false, std::move(msg)}; }

    friend bool operator==(const CompileStatus&, const CompileStatus&) = default;
};

// Compiles Python source to bytecode in an external interpreter process. The
// source is written to a temp file; exit status 0 means Pass.
class SyntaxChecker {
public:
    explicit SyntaxChecker(std::string interpreter = "python3");

    // Throws ToolchainMissing when the interpreter cannot be started.
    CompileStatus check(std::string_view code) const;

    const std::string& interpreter() const { return interpreter_; }

    // Extension of source files in the subject language.
    static constexpr std::string_view extension = ".py";

private:
    std::string interpreter_;
};

}  // namespace sallm
