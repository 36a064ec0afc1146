#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "fspm_bridge/protocol.hpp"

namespace fspm_bridge {

using Clock = std::chrono::steady_clock;

/// Connected TCP stream. Move-only; closes on destruction.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  bool is_open() const noexcept { return fd_ >= 0; }
  int fd() const noexcept { return fd_; }
  void close() noexcept;

  /// Throws ConnectionClosed, Timeout.
  void send_all(std::string_view bytes, std::optional<Clock::time_point> deadline = std::nullopt);
  /// Reads exactly n bytes. Throws ConnectionClosed when the peer closes
  /// before the first byte, Truncated when it closes after, Timeout.
  std::string recv_exact(std::size_t n, std::optional<Clock::time_point> deadline = std::nullopt);

 private:
  int fd_ = -1;
};

/// Listening TCP socket bound to host:port (port 0 picks a free port).
class Listener {
 public:
  /// Throws IoError when the address cannot be bound.
  static Listener bind(std::uint16_t port, const std::string& host = "127.0.0.1");

  std::uint16_t port() const noexcept { return port_; }
  /// nullopt on timeout.
  std::optional<Socket> accept(std::optional<std::chrono::milliseconds> timeout = std::nullopt);

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

/// Throws ConnectRefused, Timeout.
Socket connect_to(const std::string& host, std::uint16_t port,
                  std::chrono::milliseconds timeout = std::chrono::seconds(30));

struct FrameIo {
  std::size_t cap = kDefaultFrameCap;
  std::optional<Clock::time_point> deadline;
};

void send_message(Socket& socket, const Message& message, const FrameIo& io = {});
/// Throws ConnectionClosed, Truncated, Oversize (payload left unread),
/// MalformedMessage (frame consumed), Timeout.
Message recv_message(Socket& socket, const FrameIo& io = {});

}  // namespace fspm_bridge
