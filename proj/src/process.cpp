#include "sallm/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <system_error>

extern char** environ;

namespace sallm {

namespace {

using Clock = std::chrono::steady_clock;

struct Pipe {
    int fds[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fds, O_CLOEXEC) != 0) {
            throw std::system_error(errno, std::generic_category(), "pipe2");
        }
    }
    ~Pipe() { close_both(); }
    void close_read() { close_fd(fds[0]); }
    void close_write() { close_fd(fds[1]); }
    void close_both() { close_read(); close_write(); }
    static void close_fd(int& fd) {
        if (fd >= 0) {
            ::close(fd);
            fd = -1;
        }
    }
};

void set_nonblocking(int fd) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& opts) {
    if (argv.empty()) throw std::invalid_argument("run_process: empty argv");

    ProcessResult result;
    Pipe in, out, err, status;

    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    std::vector<std::string> env_storage;
    for (char** e = environ; *e; ++e) env_storage.emplace_back(*e);
    for (const auto& e : opts.extra_env) env_storage.push_back(e);
    std::vector<char*> cenv;
    for (auto& e : env_storage) cenv.push_back(e.data());
    cenv.push_back(nullptr);

    const std::string cwd = opts.cwd.string();
    const auto start = Clock::now();

    pid_t pid = ::fork();
    if (pid < 0) throw std::system_error(errno, std::generic_category(), "fork");
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(in.fds[0], STDIN_FILENO);
        ::dup2(out.fds[1], STDOUT_FILENO);
        ::dup2(err.fds[1], STDERR_FILENO);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
            int e = errno;
            (void)!::write(status.fds[1], &e, sizeof e);
            ::_exit(127);
        }
        environ = cenv.data();
        ::execvp(cargv[0], cargv.data());
        int e = errno;
        (void)!::write(status.fds[1], &e, sizeof e);
        ::_exit(127);
    }

    in.close_read();
    out.close_write();
    err.close_write();
    status.close_write();

    int child_errno = 0;
    if (::read(status.fds[0], &child_errno, sizeof child_errno) == sizeof child_errno) {
        result.spawn_failed = true;
    }
    status.close_read();

    // Feed stdin; small payloads only, so a blocking write is fine.
    if (!result.spawn_failed && !opts.stdin_data.empty()) {
        const char* p = opts.stdin_data.data();
        size_t left = opts.stdin_data.size();
        while (left > 0) {
            ssize_t n = ::write(in.fds[1], p, left);
            if (n <= 0) break;
            p += n;
            left -= static_cast<size_t>(n);
        }
    }
    in.close_write();

    set_nonblocking(out.fds[0]);
    set_nonblocking(err.fds[0]);

    std::array<char, 8192> buf{};
    bool killed = false;
    while (out.fds[0] >= 0 || err.fds[0] >= 0) {
        std::array<pollfd, 2> pfds{};
        nfds_t count = 0;
        int* owners[2] = {nullptr, nullptr};
        std::string* sinks[2] = {nullptr, nullptr};
        if (out.fds[0] >= 0) {
            pfds[count] = {out.fds[0], POLLIN, 0};
            owners[count] = &out.fds[0];
            sinks[count++] = &result.out;
        }
        if (err.fds[0] >= 0) {
            pfds[count] = {err.fds[0], POLLIN, 0};
            owners[count] = &err.fds[0];
            sinks[count++] = &result.err;
        }

        int wait_ms = 200;
        if (opts.timeout && !killed) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                start + *opts.timeout - Clock::now());
            if (left.count() <= 0) {
                ::kill(-pid, SIGKILL);
                killed = true;
                result.timed_out = true;
            } else {
                wait_ms = static_cast<int>(std::min<long long>(left.count(), 200));
            }
        }

        int rc = ::poll(pfds.data(), count, wait_ms);
        if (rc < 0 && errno != EINTR) break;
        for (nfds_t i = 0; i < count; ++i) {
            if (!(pfds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            for (;;) {
                ssize_t n = ::read(*owners[i], buf.data(), buf.size());
                if (n > 0) {
                    sinks[i]->append(buf.data(), static_cast<size_t>(n));
                    continue;
                }
                if (n == 0 || (errno != EAGAIN && errno != EINTR)) Pipe::close_fd(*owners[i]);
                break;
            }
        }
        // Grandchildren may hold the pipes open after the group is killed.
        if (killed) {
            Pipe::close_fd(out.fds[0]);
            Pipe::close_fd(err.fds[0]);
        }
    }

    int wstatus = 0;
    while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
    }
    result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    if (WIFEXITED(wstatus)) {
        result.exit_code = WEXITSTATUS(wstatus);
    } else if (WIFSIGNALED(wstatus)) {
        result.exit_code = 128 + WTERMSIG(wstatus);
    }
    if (result.spawn_failed) result.err = std::strerror(child_errno);
    return result;
}

bool executable_available(const std::string& name) {
    if (name.empty()) return false;
    if (name.find('/') != std::string::npos) return ::access(name.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (!path) return false;
    std::string p(path);
    size_t pos = 0;
    while (pos <= p.size()) {
        size_t next = p.find(':', pos);
        if (next == std::string::npos) next = p.size();
        std::string dir = p.substr(pos, next - pos);
        if (dir.empty()) dir = ".";
        std::string candidate = dir + "/" + name;
        struct stat st {};
        if (::stat(candidate.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
            ::access(candidate.c_str(), X_OK) == 0) {
            return true;
        }
        pos = next + 1;
    }
    return false;
}

TempDir::TempDir(const std::string& prefix) {
    std::string pattern = (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX")).string();
    if (::mkdtemp(pattern.data()) == nullptr) {
        throw std::system_error(errno, std::generic_category(), "mkdtemp");
    }
    path_ = pattern;
}

TempDir::~TempDir() {
    if (path_.empty()) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

TempDir::TempDir(TempDir&& other) noexcept : path_(std::move(other.path_)) {
    other.path_.clear();
}

}  // namespace sallm
