#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <nlohmann/json.hpp>
#include <thread>

#include "nsatp/error.hpp"
#include "nsatp/oracle.hpp"

namespace nsatp {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text() { return std::strerror(errno); }

}  // namespace

// The child talks over one end of a socketpair dup'ed onto its stdin and
// stdout. A socket (unlike a pipe) lets us write with MSG_NOSIGNAL, so a
// child that dies mid-run surfaces as an error instead of SIGPIPE.
ExternalOracle::ExternalOracle(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  if (command_.empty()) throw Error(ErrorCode::ProcessSpawnFailure, "empty oracle command");
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw Error(ErrorCode::ProcessSpawnFailure, "socketpair: " + errno_text());
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw Error(ErrorCode::ProcessSpawnFailure, "fork: " + errno_text());
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  pid_ = pid;
  fd_ = fds[0];
}

ExternalOracle::~ExternalOracle() { shutdown(); }

void ExternalOracle::shutdown() noexcept {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_WR);
  }
  if (pid_ > 0) {
    // Give the child a moment to exit on end of input, then insist.
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50 && !reaped; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        reaped = true;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::string ExternalOracle::read_line() {
  const auto deadline = Clock::now() + timeout_;
  while (true) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) {
      broken_ = true;
      throw Error(ErrorCode::Timeout, "no response from '" + command_ + "' within " +
                                          std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw Error(ErrorCode::ProtocolViolation, "poll: " + errno_text());
    }
    if (ready == 0) continue;
    char chunk[65536];
    ssize_t n = ::read(fd_, chunk, sizeof chunk);
    // a child that exits with our request unread resets the socket
    if (n < 0 && errno == ECONNRESET) n = 0;
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      broken_ = true;
      throw Error(ErrorCode::ProtocolViolation, "read: " + errno_text());
    }
    if (n == 0) {
      broken_ = true;
      int status = 0;
      std::string how = "closed its output";
      if (::waitpid(pid_, &status, 0) == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) how += " (exit " + std::to_string(WEXITSTATUS(status)) + ")";
        if (WIFSIGNALED(status)) how += " (signal " + std::to_string(WTERMSIG(status)) + ")";
      }
      // A child that never answered most likely failed to start at all.
      throw Error(answered_ ? ErrorCode::ProtocolViolation : ErrorCode::ProcessSpawnFailure,
                  "'" + command_ + "' " + how);
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ProbabilityVector ExternalOracle::predict(std::span<const double> pixels, const ImageShape& shape) {
  if (broken_) {
    throw Error(ErrorCode::ProtocolViolation, "oracle '" + command_ + "' is no longer usable");
  }
  if (shape.size() != pixels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "pixel count does not match the declared shape");
  }
  const std::int64_t id = next_id_++;
  nlohmann::json request;
  request["id"] = id;
  request["shape"] = {shape.height, shape.width, shape.channels};
  request["pixels"] = std::vector<double>(pixels.begin(), pixels.end());
  const std::string line = request.dump() + "\n";

  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw Error(answered_ ? ErrorCode::ProtocolViolation : ErrorCode::ProcessSpawnFailure,
                  "cannot write to '" + command_ + "': " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }

  const std::string reply = read_line();
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    broken_ = true;
    throw Error(ErrorCode::ProtocolViolation, "response is not JSON: '" + reply.substr(0, 80) + "'");
  }
  if (!response.is_object() || !response.contains("id") || !response["id"].is_number_integer()) {
    broken_ = true;
    throw Error(ErrorCode::ProtocolViolation, "response lacks an integer id");
  }
  if (response["id"].get<std::int64_t>() != id) {
    broken_ = true;
    throw Error(ErrorCode::ProtocolViolation,
                "response id " + response["id"].dump() + " does not match request id " +
                    std::to_string(id));
  }
  answered_ = true;
  if (response.contains("error")) {
    throw Error(ErrorCode::ProtocolViolation, "oracle reported: " + response["error"].dump());
  }
  if (!response.contains("probs") || !response["probs"].is_array()) {
    throw Error(ErrorCode::ProtocolViolation, "response lacks a probs array");
  }
  std::vector<double> probs;
  try {
    probs = response["probs"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ProtocolViolation, "probs must be numbers");
  }
  try {
    return ProbabilityVector(std::move(probs));
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidVector, e.what());
  }
}

}  // namespace nsatp
