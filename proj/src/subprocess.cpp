#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include "palmscan/gateway.hpp"

extern char** environ;

namespace palmscan::gateway {

namespace {

void ignore_sigpipe_once() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) noexcept {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

}  // namespace

SubprocessChannel::SubprocessChannel(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) throw ChannelFailure("empty backend command line");
  ignore_sigpipe_once();

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw ChannelFailure(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ChannelFailure(std::string("pipe: ") + std::strerror(errno));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> args;
  args.reserve(argv_.size() + 1);
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw ChannelFailure("cannot start backend '" + argv_[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessChannel::~SubprocessChannel() { terminate(); }

void SubprocessChannel::terminate() noexcept {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ <= 0) return;
  // Closing stdin asks the backend to exit; give it a moment, then kill.
  for (int i = 0; i < 50; ++i) {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
      pid_ = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(pid_, SIGKILL);
  int status = 0;
  ::waitpid(pid_, &status, 0);
  pid_ = -1;
}

std::string SubprocessChannel::exchange(const std::string& line) {
  if (pid_ <= 0) throw ChannelFailure("backend is not running");
  std::string out = line;
  out += '\n';
  std::size_t written = 0;
  while (written < out.size()) {
    const ssize_t n = ::write(to_child_, out.data() + written, out.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      terminate();
      throw ChannelFailure("backend write failed: " + why);
    }
    written += static_cast<std::size_t>(n);
  }

  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!reply.empty() && reply.back() == '\r') reply.pop_back();
      return reply;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      terminate();
      throw ChannelFailure("backend timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr < 0) {
      if (errno == EINTR) continue;
      terminate();
      throw ChannelFailure(std::string("poll failed: ") + std::strerror(errno));
    }
    if (pr == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      terminate();
      throw ChannelFailure(std::string("backend read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      terminate();
      throw ChannelFailure("backend exited unexpectedly");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ChannelFactory subprocess_factory(std::vector<std::string> argv, std::chrono::milliseconds timeout) {
  return [argv = std::move(argv), timeout]() -> std::unique_ptr<BackendChannel> {
    return std::make_unique<SubprocessChannel>(argv, timeout);
  };
}

}  // namespace palmscan::gateway
