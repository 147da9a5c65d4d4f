#include "wmlock/external_oracle.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock {

namespace {

using Clock = std::chrono::steady_clock;

class FdLineChannel : public LineChannel {
 public:
  FdLineChannel(int read_fd, int write_fd, bool socket)
      : read_fd_(read_fd), write_fd_(write_fd), socket_(socket) {}

  ~FdLineChannel() override {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
  }

  void write_line(const std::string& line) override {
    std::string data = line;
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n =
          socket_ ? ::send(write_fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                  : ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleIoError(std::string("oracle write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - Clock::now());
      if (left.count() <= 0) throw OracleIoError("timed out waiting for oracle output");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw OracleIoError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw OracleIoError(std::string("oracle read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw OracleIoError("oracle closed its output stream");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  int read_fd_;
  int write_fd_;

 private:
  bool socket_;
  std::string buffer_;
};

class ProcessChannel final : public FdLineChannel {
 public:
  ProcessChannel(int read_fd, int write_fd, pid_t pid)
      : FdLineChannel(read_fd, write_fd, false), pid_(pid) {}

  ~ProcessChannel() override {
    // Closing stdin asks the child to exit; escalate if it lingers.
    ::close(write_fd_);
    write_fd_ = -1;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }

 private:
  pid_t pid_;
};

}  // namespace

std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command) {
  // A dead oracle process must surface as a write error, not kill the caller.
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw OracleIoError("pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw OracleIoError("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw OracleIoError("fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res) {
    throw OracleIoError("cannot resolve " + host + ":" + port_str);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw OracleIoError("cannot connect to " + host + ":" + port_str);
  return std::make_unique<FdLineChannel>(fd, fd, true);
}

// ---------------------------------------------------------------------------

ExternalOracle::ExternalOracle(std::unique_ptr<LineChannel> channel, std::string spec,
                               std::chrono::milliseconds timeout)
    : ScoreOracle(std::move(spec)), channel_(std::move(channel)), timeout_(timeout) {
  const std::string line = channel_->read_line(timeout_);
  try {
    const auto hello = nlohmann::json::parse(line).at("hello");
    classes_ = hello.at("classes").get<int>();
    const int w = hello.at("input_w").get<int>();
    const int h = hello.at("input_h").get<int>();
    normalized_ = hello.value("normalized", false);
    if (classes_ < 2 || w < 1 || h < 1) {
      throw OracleIoError("handshake declares invalid classes or input size");
    }
    input_ = InputSize{w, h};
  } catch (const nlohmann::json::exception& e) {
    throw OracleIoError(std::string("bad oracle handshake: ") + e.what());
  }
}

ScoreVector ExternalOracle::score_one(const RgbaImage& image) {
  return std::move(score_many(std::span<const RgbaImage>(&image, 1)).front());
}

std::vector<ScoreVector> ExternalOracle::score_many(std::span<const RgbaImage> images) {
  std::lock_guard lock(mu_);
  const std::uint64_t first_id = next_id_;
  next_id_ += images.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    nlohmann::json req;
    req["id"] = first_id + i;
    req["png_b64"] = base64_encode(encode_png(images[i]));
    channel_->write_line(req.dump());
  }

  std::vector<std::optional<ScoreVector>> results(images.size());
  std::size_t pending = images.size();
  std::optional<OracleIoError> first_error;
  while (pending > 0) {
    std::uint64_t waiting_for = first_id;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) {
        waiting_for = first_id + i;
        break;
      }
    }
    std::string line;
    try {
      line = channel_->read_line(timeout_);
    } catch (const OracleIoError& e) {
      throw OracleIoError(e.what(), waiting_for);
    }
    nlohmann::json resp;
    std::uint64_t id = 0;
    try {
      resp = nlohmann::json::parse(line);
      id = resp.at("id").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw OracleIoError(std::string("protocol violation: ") + e.what(), waiting_for);
    }
    if (id < first_id || id >= first_id + images.size() || results[id - first_id]) {
      throw OracleIoError("protocol violation: unexpected response id " +
                          std::to_string(id), id);
    }
    auto& slot = results[id - first_id];
    --pending;
    if (resp.contains("error")) {
      slot = ScoreVector{};
      if (!first_error) {
        first_error.emplace("oracle error for request " + std::to_string(id) + ": " +
                                resp["error"].dump(),
                            id);
      }
      continue;
    }
    try {
      slot = ScoreVector{resp.at("scores").get<std::vector<double>>()};
    } catch (const nlohmann::json::exception& e) {
      throw OracleIoError(std::string("protocol violation: ") + e.what(), id);
    }
    if (slot->class_count() != classes_) {
      throw OracleIoError("protocol violation: response has " +
                          std::to_string(slot->class_count()) + " scores", id);
    }
  }
  if (first_error) throw *first_error;

  std::vector<ScoreVector> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace wmlock
