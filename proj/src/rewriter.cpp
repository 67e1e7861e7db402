#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <tuple>

#include "secpol/error.hpp"
#include "secpol/sqlgen.hpp"

namespace secpol {

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw RewriterFailed(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() { close_all(); }
  void close_end(int i) {
    if (fd[i] >= 0) ::close(fd[i]);
    fd[i] = -1;
  }
  void close_all() {
    close_end(0);
    close_end(1);
  }
};

}  // namespace

std::string external_rewrite(const std::string& query, const std::string& command,
                             std::chrono::milliseconds timeout) {
  // A rewriter that exits without reading its input must not kill us.
  static const bool sigpipe_ignored = (::signal(SIGPIPE, SIG_IGN), true);
  (void)sigpipe_ignored;
  Pipe in, out, err;
  pid_t pid = ::fork();
  if (pid < 0) throw RewriterFailed(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::dup2(err.fd[1], STDERR_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  in.close_end(0);
  out.close_end(1);
  err.close_end(1);
  ::fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

  std::string stdout_text, stderr_text;
  std::size_t written = 0;
  if (query.empty()) in.close_end(1);
  auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[4096];
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw RewriterTimeout("rewriter '" + command + "' exceeded " + std::to_string(timeout.count()) + " ms");
    }
    pollfd fds[3];
    int n = 0;
    int idx_in = -1, idx_out = -1, idx_err = -1;
    if (in.fd[1] >= 0) fds[idx_in = n++] = {in.fd[1], POLLOUT, 0};
    if (out.fd[0] >= 0) fds[idx_out = n++] = {out.fd[0], POLLIN, 0};
    if (err.fd[0] >= 0) fds[idx_err = n++] = {err.fd[0], POLLIN, 0};
    int rc = ::poll(fds, n, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw RewriterFailed(std::string("poll: ") + std::strerror(errno));
    }
    if (idx_in >= 0 && fds[idx_in].revents) {
      if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
        in.close_end(1);
      } else {
        ssize_t w = ::write(in.fd[1], query.data() + written, query.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (written == query.size() || (w < 0 && errno != EAGAIN)) in.close_end(1);
      }
    }
    for (auto [idx, pipe, sink] : {std::tuple{idx_out, &out, &stdout_text}, std::tuple{idx_err, &err, &stderr_text}}) {
      if (idx < 0 || !fds[idx].revents) continue;
      ssize_t r = ::read(pipe->fd[0], buf, sizeof buf);
      if (r > 0) sink->append(buf, static_cast<std::size_t>(r));
      else if (r == 0 || errno != EAGAIN) pipe->close_end(0);
    }
  }
  in.close_end(1);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    std::string why = WIFEXITED(status) ? "exit status " + std::to_string(WEXITSTATUS(status))
                                        : "terminated by signal " + std::to_string(WTERMSIG(status));
    throw RewriterFailed("rewriter '" + command + "' failed (" + why + "): " + stderr_text);
  }
  return stdout_text;
}

}  // namespace secpol
