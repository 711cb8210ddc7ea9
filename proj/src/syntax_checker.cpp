#include "sallm/syntax_checker.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <system_error>

#include "sallm/error.hpp"
#include "sallm/process.hpp"

namespace sallm {

namespace {

// Prints "<msg> (line N)" for the first syntax error and exits 1.
constexpr const char* kCompileScript = R"PY(
import sys
path = sys.argv[1]
with open(path, 'rb') as fh:
    src = fh.read()
try:
    compile(src, path, 'exec', dont_inherit=True)
except SyntaxError as e:
    sys.stderr.write('%s (line %s)\n' % (e.msg, e.lineno))
    sys.exit(1)
except ValueError as e:
    sys.stderr.write('%s\n' % e)
    sys.exit(1)
)PY";

class TempSource {
public:
    explicit TempSource(std::string_view code) {
        std::string pattern = (std::filesystem::temp_directory_path() / "sallm-src-XXXXXX.py").string();
        int fd = ::mkstemps(pattern.data(), 3);
        if (fd < 0) throw std::system_error(errno, std::generic_category(), "mkstemps");
        path_ = pattern;
        const char* p = code.data();
        size_t left = code.size();
        while (left > 0) {
            ssize_t n = ::write(fd, p, left);
            if (n <= 0) {
                ::close(fd);
                throw IoError("cannot write " + path_.string());
            }
            p += n;
            left -= static_cast<size_t>(n);
        }
        ::close(fd);
    }
    ~TempSource() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    TempSource(const TempSource&) = delete;
    TempSource& operator=(const TempSource&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string first_line(const std::string& s) {
    auto end = s.find('\n');
    return end == std::string::npos ? s : s.substr(0, end);
}

}  // namespace

SyntaxChecker::SyntaxChecker(std::string interpreter) : interpreter_(std::move(interpreter)) {}

CompileStatus SyntaxChecker::check(std::string_view code) const {
    TempSource src(code);
    ProcessResult r = run_process({interpreter_, "-c", kCompileScript, src.path().string()},
                                  {.timeout = std::chrono::seconds(30)});
    if (r.spawn_failed) {
        throw ToolchainMissing("cannot start '" + interpreter_ + "': " + r.err);
    }
    if (r.timed_out) throw ToolchainMissing("'" + interpreter_ + "' timed out compiling source");
    if (r.exit_code == 0) return CompileStatus::Pass();
    if (r.exit_code == 1 && !r.err.empty()) return CompileStatus::Fail(first_line(r.err));
    throw ToolchainMissing("'" + interpreter_ + "' exited with status " + std::to_string(r.exit_code) +
                           ": " + first_line(r.err));
}

}  // namespace sallm
