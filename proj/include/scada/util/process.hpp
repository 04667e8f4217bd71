#pragma once

// Child process with piped stdin/stdout; killed and reaped on destruction.

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "scada/bytes.hpp"

extern char** environ;

namespace scada::util {

class FileDescriptor {
public:
    FileDescriptor() = default;
    explicit FileDescriptor(int fd) : fd_(fd) {}
    FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    FileDescriptor& operator=(FileDescriptor&& o) noexcept
    {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;
    ~FileDescriptor() { reset(); }

    int get() const { return fd_; }
    explicit operator bool() const { return fd_ >= 0; }
    void reset()
    {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

class ChildProcess {
public:
    /// Starts argv[0] (searched on PATH) in `cwd` (empty: inherit).
    ChildProcess(const std::vector<std::string>& argv, const std::string& cwd = {})
    {
        if (argv.empty()) throw std::invalid_argument("empty command");
        int in[2], out[2];
        if (::pipe2(in, O_CLOEXEC) != 0) throw std::runtime_error(std::string("pipe: ") + std::strerror(errno));
        if (::pipe2(out, O_CLOEXEC) != 0) {
            ::close(in[0]);
            ::close(in[1]);
            throw std::runtime_error(std::string("pipe: ") + std::strerror(errno));
        }
        FileDescriptor in_r(in[0]), out_w(out[1]);
        stdin_ = FileDescriptor(in[1]);
        stdout_ = FileDescriptor(out[0]);

        posix_spawn_file_actions_t fa;
        posix_spawn_file_actions_init(&fa);
        posix_spawn_file_actions_adddup2(&fa, in_r.get(), 0);
        posix_spawn_file_actions_adddup2(&fa, out_w.get(), 1);
        posix_spawn_file_actions_adddup2(&fa, out_w.get(), 2);
        if (!cwd.empty()) posix_spawn_file_actions_addchdir_np(&fa, cwd.c_str());

        std::vector<char*> args;
        for (auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        int rc = ::posix_spawnp(&pid_, args[0], &fa, nullptr, args.data(), environ);
        posix_spawn_file_actions_destroy(&fa);
        if (rc != 0) {
            pid_ = -1;
            throw std::runtime_error("cannot start '" + argv[0] + "': " + std::strerror(rc));
        }
        ::fcntl(stdout_.get(), F_SETFL, ::fcntl(stdout_.get(), F_GETFL) | O_NONBLOCK);
        std::signal(SIGPIPE, SIG_IGN);
    }

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ~ChildProcess() { kill(); }

    pid_t pid() const { return pid_; }

    bool write(ByteView data)
    {
        std::size_t done = 0;
        while (done < data.size() && stdin_) {
            auto n = ::write(stdin_.get(), data.data() + done, data.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            done += static_cast<std::size_t>(n);
        }
        return done == data.size();
    }

    void close_stdin() { stdin_.reset(); }

    /// Reads what the child prints: waits up to `first` for output to start,
    /// then keeps reading until it has been quiet for `quiet` or stdout ends.
    Bytes read_burst(std::chrono::milliseconds first, std::chrono::milliseconds quiet, std::size_t limit = 65536)
    {
        Bytes out;
        auto wait = first;
        while (out.size() < limit && stdout_) {
            pollfd pfd{stdout_.get(), POLLIN, 0};
            int rc = ::poll(&pfd, 1, static_cast<int>(wait.count()));
            if (rc < 0 && errno == EINTR) continue;
            if (rc <= 0) break;
            std::uint8_t buf[4096];
            auto n = ::read(stdout_.get(), buf, sizeof buf);
            if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
            if (n <= 0) {
                eof_ = true;
                break;
            }
            out.insert(out.end(), buf, buf + n);
            wait = quiet;
        }
        return out;
    }

    bool eof() const { return eof_; }

    bool running()
    {
        if (pid_ < 0) return false;
        int st;
        if (::waitpid(pid_, &st, WNOHANG) == pid_) {
            pid_ = -1;
            return false;
        }
        return true;
    }

    void kill()
    {
        stdin_.reset();
        stdout_.reset();
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            int st;
            while (::waitpid(pid_, &st, 0) < 0 && errno == EINTR) {}
            pid_ = -1;
        }
    }

private:
    pid_t pid_ = -1;
    FileDescriptor stdin_, stdout_;
    bool eof_ = false;
};

/// Splits a command line on whitespace (no quoting rules).
inline std::vector<std::string> split_command(std::string_view cmd)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : cmd) {
        if (c == ' ' || c == '\t' || c == '\n') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

} // namespace scada::util
