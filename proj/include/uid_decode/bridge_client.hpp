// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "uid_decode/bridge_protocol.hpp"
#include "uid_decode/info_measures.hpp"

namespace uid_decode::bridge {

using Milliseconds = std::chrono::milliseconds;
inline constexpr Milliseconds kDefaultTimeout{30000};

/// A bidirectional line channel. One request in flight at a time.
class LineTransport {
 public:
  virtual ~LineTransport() = default;
  virtual void send_line(std::string_view line) = 0;
  /// Next '\n'-terminated line without its terminator; throws TimeoutError.
  virtual std::string receive_line(Milliseconds timeout) = 0;
};

/// Line framing over a connected stream socket.
class SocketLineChannel : public LineTransport {
 public:
  explicit SocketLineChannel(int fd) : fd_(fd) {}
  SocketLineChannel(const SocketLineChannel&) = delete;
  SocketLineChannel& operator=(const SocketLineChannel&) = delete;
  ~SocketLineChannel() override { close_fd(); }

  void send_line(std::string_view line) override {
    std::string buf(line);
    buf += '\n';
    std::size_t sent = 0;
    while (sent < buf.size()) {
      const ssize_t n = ::send(fd_, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string receive_line(Milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<Milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("no response within " + std::to_string(timeout.count()) + " ms");
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("server closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd() const { return fd_; }

 private:
  int fd_;
  std::string buffer_;
};

namespace detail {
struct ChildPid {
  pid_t pid_ = -1;
};
}  // namespace detail

/**
 * Spawns `/bin/sh -c <command>` with its stdin and stdout connected to one end
 * of a socketpair. The child's stderr is inherited.
 */
class SubprocessTransport : private detail::ChildPid, public SocketLineChannel {
 public:
  explicit SubprocessTransport(const std::string& command)
      : detail::ChildPid(), SocketLineChannel(spawn(command, pid_)) {}

  ~SubprocessTransport() override {
    // EOF on the child's stdin asks it to exit; give it a moment, then kill.
    ::shutdown(fd(), SHUT_WR);
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(Milliseconds(20));
    }
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

 private:
  static int spawn(const std::string& command, pid_t& pid) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw TransportError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    return sv[0];
  }
};

/// TCP connection to `host:port`.
class SocketTransport : public SocketLineChannel {
 public:
  explicit SocketTransport(const std::string& endpoint) : SocketLineChannel(connect_to(endpoint)) {}

 private:
  static int connect_to(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw ConfigError("socket endpoint must be host:port, got '" + endpoint + "'");
    const std::string host = endpoint.substr(0, colon);
    const std::string port = endpoint.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw TransportError("cannot resolve " + endpoint + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return fd;
      ::close(fd);
    }
    throw TransportError("cannot connect to " + endpoint);
  }
};

/**
 * Client half of the probability-server protocol. Requests strictly alternate
 * with responses; ids increase from 1 (0 is reserved for the handshake).
 */
class BridgeClient {
 public:
  explicit BridgeClient(std::unique_ptr<LineTransport> transport, Milliseconds timeout = kDefaultTimeout)
      : transport_(std::move(transport)), timeout_(timeout) {}

  ServerInfo handshake() {
    transport_->send_line(serialize_hello());
    info_ = parse_hello_response(transport_->receive_line(timeout_));
    return *info_;
  }

  [[nodiscard]] const std::optional<ServerInfo>& info() const noexcept { return info_; }

  /// Raw "next" exchange: the validated wire response.
  BridgeResponse request_next(std::span<const TokenId> context, std::size_t top_k) {
    const std::size_t vocab = require_handshake();
    if (top_k < 1 || top_k > vocab) {
      throw ConfigError("top_k must lie in [1, " + std::to_string(vocab) + "], got " + std::to_string(top_k));
    }
    BridgeRequest req{next_id_++, {context.begin(), context.end()}, static_cast<std::int64_t>(top_k)};
    transport_->send_line(serialize(req));
    BridgeResponse resp = parse_response(transport_->receive_line(timeout_));
    if (resp.id != req.id) {
      throw MalformedResponse("response id " + std::to_string(resp.id) + " does not match request id " +
                              std::to_string(req.id));
    }
    if (resp.token_ids.size() > top_k) throw MalformedResponse("more than top_k entries returned");
    return resp;
  }

  /**
   * Dense distribution: the returned top-k entries at their ids, rest_mass
   * spread uniformly over every id not returned, then renormalized.
   */
  NextTokenDistribution fetch_distribution(std::span<const TokenId> context, std::size_t top_k) {
    const BridgeResponse resp = request_next(context, top_k);
    return to_distribution(resp, info_->vocab_size, context.size());
  }

  std::vector<TokenId> encode(std::string_view text) {
    const std::size_t vocab = require_handshake();
    const std::int64_t id = next_id_++;
    transport_->send_line(serialize_encode(id, text));
    EncodeResponse resp = parse_encode_response(transport_->receive_line(timeout_));
    if (resp.id != id) throw MalformedResponse("encode response id mismatch");
    for (TokenId t : resp.token_ids) {
      if (t >= vocab) throw MalformedResponse("encoded token id outside vocabulary");
    }
    return std::move(resp.token_ids);
  }

  static NextTokenDistribution to_distribution(const BridgeResponse& resp, std::size_t vocab_size,
                                               std::size_t context_len) {
    std::vector<double> probs(vocab_size, -1.0);
    for (std::size_t i = 0; i < resp.token_ids.size(); ++i) {
      const TokenId t = resp.token_ids[i];
      if (t >= vocab_size) throw MalformedResponse("token id " + std::to_string(t) + " outside vocabulary");
      if (probs[t] >= 0.0) throw MalformedResponse("duplicate token id " + std::to_string(t));
      probs[t] = std::exp(resp.logprobs[i]);
    }
    const std::size_t missing = vocab_size - resp.token_ids.size();
    const double spread = missing > 0 ? std::max(resp.rest_mass, 0.0) / static_cast<double>(missing) : 0.0;
    double sum = 0.0;
    for (double& p : probs) {
      if (p < 0.0) p = spread;
      sum += p;
    }
    if (!(sum > 0.0)) throw MalformedResponse("response carries no probability mass");
    for (double& p : probs) p = std::min(p / sum, 1.0);
    return NextTokenDistribution(std::move(probs), context_len);
  }

 private:
  std::size_t require_handshake() const {
    if (!info_) throw TransportError("handshake has not been performed");
    return info_->vocab_size;
  }

  std::unique_ptr<LineTransport> transport_;
  Milliseconds timeout_;
  std::optional<ServerInfo> info_;
  std::int64_t next_id_ = 1;
};

/// Adapts a connected BridgeClient to the decoder's probability-source shape.
class BridgeSource {
 public:
  BridgeSource(BridgeClient& client, std::size_t top_k, TokenId eos_id)
      : client_(&client), top_k_(top_k), eos_id_(eos_id) {}

  NextTokenDistribution next_distribution(std::span<const TokenId> context) {
    return client_->fetch_distribution(context, top_k_);
  }
  [[nodiscard]] std::size_t vocab_size() const { return client_->info()->vocab_size; }
  [[nodiscard]] TokenId eos_id() const { return eos_id_; }
  [[nodiscard]] std::size_t top_k() const { return top_k_; }

 private:
  BridgeClient* client_;
  std::size_t top_k_;
  TokenId eos_id_;
};

}  // namespace uid_decode::bridge
