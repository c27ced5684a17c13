#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <json.hpp>

#include "calltide/classify.hpp"
#include "calltide/errors.hpp"

extern char** environ;

namespace calltide {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kDiagnosticsLimit = 64 * 1024;
constexpr std::chrono::milliseconds kDiagnosticsGrace{250};
constexpr std::size_t kLineLimit = 64 * 1024 * 1024;

bool is_executable_file(const std::filesystem::path& p) {
    struct stat st {};
    if (::stat(p.c_str(), &st) != 0) return false;
    return S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
}

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    int get() const { return fd_; }
    explicit operator bool() const { return fd_ >= 0; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

std::pair<Fd, Fd> make_pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) {
        throw IoError(std::string("pipe failed: ") + std::strerror(errno));
    }
    return {Fd(fds[0]), Fd(fds[1])};
}

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return left.count() <= 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 1 << 30));
}

std::string describe_status(int status) {
    if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
    return "stopped";
}

std::string with_diagnostics(std::string message, const std::string& diagnostics) {
    if (!diagnostics.empty()) {
        std::string tail = diagnostics;
        while (!tail.empty() && (tail.back() == '\n' || tail.back() == '\r')) tail.pop_back();
        for (char& c : tail) {
            if (c == '\n') c = ' ';
        }
        message += "; stderr: " + tail;
    }
    return message;
}

}  // namespace

struct PluginClassifier::Process {
    pid_t pid = -1;
    Fd in;   // our write end of the child's stdin
    Fd out;  // child's stdout
    Fd err;  // child's stderr
    std::string out_buffer;
    std::string diagnostics;
    bool out_eof = false;
    bool reaped = false;
    int status = 0;
    std::string failure;  // set once the session is unusable
    ErrorKind failure_kind = ErrorKind::PluginCrashed;

    ~Process() { kill_and_reap(); }

    void drain_stderr() {
        char buf[4096];
        for (;;) {
            const ssize_t n = ::read(err.get(), buf, sizeof buf);
            if (n > 0) {
                diagnostics.append(buf, static_cast<std::size_t>(n));
                if (diagnostics.size() > kDiagnosticsLimit) {
                    diagnostics.erase(0, diagnostics.size() - kDiagnosticsLimit);
                }
                continue;
            }
            if (n == 0) err.reset();
            return;
        }
    }

    /// Waits for the child to exit until `deadline`; true once reaped.
    bool reap(Clock::time_point deadline) {
        if (reaped) return true;
        for (;;) {
            const pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid || (r < 0 && errno == ECHILD)) {
                reaped = true;
                if (err) drain_stderr();
                return true;
            }
            if (Clock::now() >= deadline) return false;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }

    /// Keeps reading stderr until the plugin closes it or `deadline`, so a
    /// message written just after a bad line still reaches the user.
    void collect_stderr(Clock::time_point deadline) {
        while (err) {
            pollfd fd{err.get(), POLLIN, 0};
            const int rc = ::poll(&fd, 1, remaining_ms(deadline));
            if (rc < 0 && errno == EINTR) continue;
            if (rc <= 0) return;
            drain_stderr();
        }
    }

    void kill_and_reap() {
        in.reset();
        if (pid > 0 && !reaped) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            reaped = true;
        }
    }

    std::string exit_description() {
        reap(Clock::now() + std::chrono::milliseconds(500));
        return reaped ? describe_status(status) : "closed its output";
    }

    enum class IoResult { ok, eof, timeout, broken };

    IoResult write_all(std::string_view data, Clock::time_point deadline) {
        while (!data.empty()) {
            pollfd fds[2] = {{in.get(), POLLOUT, 0}, {err.get(), POLLIN, 0}};
            const nfds_t n = err ? 2 : 1;
            const int rc = ::poll(fds, n, remaining_ms(deadline));
            if (rc < 0) {
                if (errno == EINTR) continue;
                return IoResult::broken;
            }
            if (rc == 0) return IoResult::timeout;
            if (n == 2 && (fds[1].revents & (POLLIN | POLLHUP))) drain_stderr();
            if (fds[0].revents & (POLLERR | POLLHUP)) return IoResult::broken;
            if (fds[0].revents & POLLOUT) {
                const ssize_t w = ::write(in.get(), data.data(), data.size());
                if (w < 0) {
                    if (errno == EAGAIN || errno == EINTR) continue;
                    return IoResult::broken;
                }
                data.remove_prefix(static_cast<std::size_t>(w));
            }
        }
        return IoResult::ok;
    }

    /// Reads one newline-terminated line (newline stripped).
    IoResult read_line(std::string& line, Clock::time_point deadline) {
        for (;;) {
            const auto nl = out_buffer.find('\n');
            if (nl != std::string::npos) {
                line.assign(out_buffer, 0, nl);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                out_buffer.erase(0, nl + 1);
                return IoResult::ok;
            }
            if (out_eof) return IoResult::eof;
            if (out_buffer.size() > kLineLimit) return IoResult::broken;
            pollfd fds[2] = {{out.get(), POLLIN, 0}, {err.get(), POLLIN, 0}};
            const nfds_t n = err ? 2 : 1;
            const int rc = ::poll(fds, n, remaining_ms(deadline));
            if (rc < 0) {
                if (errno == EINTR) continue;
                return IoResult::broken;
            }
            if (rc == 0) return IoResult::timeout;
            if (n == 2 && (fds[1].revents & (POLLIN | POLLHUP))) drain_stderr();
            if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
                char buf[8192];
                const ssize_t r = ::read(out.get(), buf, sizeof buf);
                if (r > 0) {
                    out_buffer.append(buf, static_cast<std::size_t>(r));
                } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
                    out_eof = true;
                }
            }
        }
    }
};

ClassifierHandle parse_hello(std::string_view line) {
    const json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw PluginProtocolError("hello is not a JSON object: " + std::string(line.substr(0, 200)));
    }
    const auto it = doc.find("hello");
    if (it == doc.end() || !it->is_object()) {
        throw PluginProtocolError("first plugin message must be a hello object");
    }
    const json& h = *it;
    auto field = [&](const char* key) -> const json& {
        const auto f = h.find(key);
        if (f == h.end()) throw PluginProtocolError(std::string("hello lacks '") + key + "'");
        return *f;
    };
    const json& name = field("name");
    const json& version = field("version");
    const json& max_tokens = field("max_tokens");
    const json& wants = field("wants");
    if (!name.is_string() || name.get_ref<const std::string&>().empty()) {
        throw PluginProtocolError("hello name must be a nonempty string");
    }
    if (!version.is_string()) throw PluginProtocolError("hello version must be a string");
    if (!max_tokens.is_number_integer() || max_tokens.get<long long>() < static_cast<long long>(kMinMaxTokens)) {
        throw PluginProtocolError("hello max_tokens must be an integer of at least 16");
    }
    if (!wants.is_string()) throw PluginProtocolError("hello wants must be raw or preprocessed");
    ClassifierHandle handle;
    handle.name = name.get<std::string>();
    handle.version = version.get<std::string>();
    handle.max_tokens = max_tokens.get<std::size_t>();
    handle.mode = ClassifierMode::plugin;
    const auto& w = wants.get_ref<const std::string&>();
    if (w == "raw") {
        handle.wants = InputKind::raw;
    } else if (w == "preprocessed") {
        handle.wants = InputKind::preprocessed;
    } else {
        throw PluginProtocolError("hello wants must be raw or preprocessed, got '" + w + "'");
    }
    return handle;
}

Scores parse_response(std::string_view line, std::string_view expected_id) {
    const json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw PluginProtocolError("response is not a JSON object: " + std::string(line.substr(0, 200)));
    }
    const auto id = doc.find("id");
    if (id == doc.end() || !id->is_string()) throw PluginProtocolError("response lacks a string id");
    if (id->get_ref<const std::string&>() != expected_id) {
        throw PluginProtocolError("response id '" + id->get<std::string>() + "' does not answer request '" +
                                  std::string(expected_id) + "'");
    }
    const auto scores = doc.find("scores");
    if (scores == doc.end() || !scores->is_array() || scores->size() != kNumClasses) {
        throw PluginProtocolError("response scores must be an array of 3 numbers");
    }
    Scores s{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const json& v = (*scores)[c];
        if (!v.is_number()) throw PluginProtocolError("response scores must be numbers");
        s[c] = v.get<double>();
        if (!std::isfinite(s[c]) || s[c] < 0.0) {
            throw PluginProtocolError("response scores must be finite and nonnegative");
        }
        sum += s[c];
    }
    if (std::abs(sum - 1.0) > 1e-4) {
        throw PluginProtocolError("response scores sum to " + std::to_string(sum) + ", not 1");
    }
    for (double& v : s) v /= sum;
    return s;
}

std::unique_ptr<PluginClassifier> PluginClassifier::launch(const std::filesystem::path& executable,
                                                           PluginOptions options) {
    if (!is_executable_file(executable)) {
        throw ConfigurationError("plugin '" + executable.string() + "' is not an executable file");
    }
    // A plugin that dies mid-write must surface as an error, not kill us.
    ::signal(SIGPIPE, SIG_IGN);

    auto [child_in, host_in] = make_pipe();
    auto [host_out, child_out] = make_pipe();
    auto [host_err, child_err] = make_pipe();

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, child_in.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, child_out.get(), STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, child_err.get(), STDERR_FILENO);

    std::vector<std::string> argv_store;
    argv_store.push_back(executable.string());
    argv_store.insert(argv_store.end(), options.args.begin(), options.args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    argv.push_back(nullptr);

    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, executable.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        throw PluginProtocolError("could not start plugin '" + executable.string() +
                                  "': " + std::strerror(rc));
    }

    auto process = std::make_unique<Process>();
    process->pid = pid;
    process->in = std::move(host_in);
    process->out = std::move(host_out);
    process->err = std::move(host_err);
    child_in.reset();
    child_out.reset();
    child_err.reset();
    ::fcntl(process->in.get(), F_SETFL, ::fcntl(process->in.get(), F_GETFL) | O_NONBLOCK);
    ::fcntl(process->err.get(), F_SETFL, ::fcntl(process->err.get(), F_GETFL) | O_NONBLOCK);

    return std::unique_ptr<PluginClassifier>(new PluginClassifier(std::move(process), std::move(options)));
}

PluginClassifier::PluginClassifier(std::unique_ptr<Process> process, PluginOptions options)
    : process_(std::move(process)), options_(std::move(options)) {
    Process& p = *process_;
    const auto deadline = Clock::now() + options_.hello_timeout;
    std::string line;
    for (;;) {
        const auto r = p.read_line(line, deadline);
        if (r == Process::IoResult::timeout) {
            p.kill_and_reap();
            throw PluginProtocolError(with_diagnostics("plugin sent no hello within " +
                                                           std::to_string(options_.hello_timeout.count()) +
                                                           " ms",
                                                       p.diagnostics),
                                      p.diagnostics);
        }
        if (r != Process::IoResult::ok) {
            const std::string how = p.exit_description();
            throw PluginProtocolError(with_diagnostics("plugin " + how + " before hello", p.diagnostics),
                                      p.diagnostics);
        }
        if (!line.empty()) break;
    }
    try {
        handle_ = parse_hello(line);
    } catch (const PluginProtocolError& e) {
        p.collect_stderr(Clock::now() + kDiagnosticsGrace);
        p.kill_and_reap();
        throw PluginProtocolError(with_diagnostics(e.what(), p.diagnostics), p.diagnostics);
    }
}

PluginClassifier::~PluginClassifier() {
    try {
        shutdown();
    } catch (...) {
    }
}

namespace {

/// Marks the session failed and throws the matching error.
[[noreturn]] void fail_session(PluginClassifier::Process& p, ErrorKind kind, std::string message) {
    p.failure = message;
    p.failure_kind = kind;
    if (kind == ErrorKind::Timeout || kind == ErrorKind::PluginProtocolError) p.kill_and_reap();
    switch (kind) {
        case ErrorKind::Timeout: throw PluginTimeout(message);
        case ErrorKind::PluginProtocolError: throw PluginProtocolError(message, p.diagnostics);
        default: throw PluginCrashed(message);
    }
}

}  // namespace

Scores PluginClassifier::score(std::string_view text) {
    std::lock_guard lock(mutex_);
    Process& p = *process_;
    if (!p.failure.empty()) {
        fail_session(p, p.failure_kind, "plugin unusable after earlier failure: " + p.failure);
    }
    if (!p.in) throw PluginCrashed("plugin session already shut down");

    const std::string id = std::to_string(next_id_++);
    const std::string request = json{{"id", id}, {"text", text}}.dump() + "\n";
    const auto deadline = Clock::now() + options_.request_timeout;

    switch (p.write_all(request, deadline)) {
        case Process::IoResult::ok:
            break;
        case Process::IoResult::timeout:
            fail_session(p, ErrorKind::Timeout, "plugin did not accept request " + id + " within " +
                                               std::to_string(options_.request_timeout.count()) + " ms");
        default:
            fail_session(p, ErrorKind::PluginCrashed,
                       with_diagnostics("plugin " + p.exit_description() + " while receiving request " + id,
                                        p.diagnostics));
    }

    std::string line;
    for (;;) {
        const auto r = p.read_line(line, deadline);
        if (r == Process::IoResult::timeout) {
            fail_session(p, ErrorKind::Timeout, "plugin did not answer request " + id + " within " +
                                               std::to_string(options_.request_timeout.count()) + " ms");
        }
        if (r != Process::IoResult::ok) {
            fail_session(p, ErrorKind::PluginCrashed,
                       with_diagnostics("plugin " + p.exit_description() + " before answering request " + id,
                                        p.diagnostics));
        }
        if (!line.empty()) break;
    }
    try {
        return parse_response(line, id);
    } catch (const PluginProtocolError& e) {
        p.collect_stderr(Clock::now() + kDiagnosticsGrace);
        fail_session(p, ErrorKind::PluginProtocolError, with_diagnostics(e.what(), p.diagnostics));
    }
}

void PluginClassifier::shutdown() {
    std::lock_guard lock(mutex_);
    Process& p = *process_;
    if (p.reaped) return;
    if (p.in) {
        const auto deadline = Clock::now() + options_.shutdown_grace;
        p.write_all(json{{"shutdown", true}}.dump() + "\n", deadline);
        p.in.reset();
        if (p.reap(deadline)) return;
    }
    p.kill_and_reap();
}

std::string PluginClassifier::diagnostics() const {
    std::lock_guard lock(mutex_);
    return process_->diagnostics;
}

}  // namespace calltide
