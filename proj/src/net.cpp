#include "fspm_bridge/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace fspm_bridge {

namespace {

std::string sys_error(std::string_view what) { return std::string(what) + ": " + std::strerror(errno); }

/// Milliseconds left until the deadline for poll(); -1 waits forever.
int poll_timeout(const std::optional<Clock::time_point>& deadline) {
  if (!deadline) return -1;
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, INT32_MAX));
}

void wait_for(int fd, short events, const std::optional<Clock::time_point>& deadline, std::string_view what) {
  for (;;) {
    pollfd p{fd, events, 0};
    int rc = ::poll(&p, 1, poll_timeout(deadline));
    if (rc > 0) return;
    if (rc == 0) throw Error(Errc::timeout, std::string(what) + " timed out");
    if (errno != EINTR) throw Error(Errc::connection_closed, sys_error("poll"));
  }
}

sockaddr_in resolve_ipv4(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(Errc::connect_refused, "cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::send_all(std::string_view bytes, std::optional<Clock::time_point> deadline) {
  while (!bytes.empty()) {
    wait_for(fd_, POLLOUT, deadline, "send");
    ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(Errc::connection_closed, sys_error("send"));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string Socket::recv_exact(std::size_t n, std::optional<Clock::time_point> deadline) {
  std::string out(n, '\0');
  std::size_t got = 0;
  while (got < n) {
    wait_for(fd_, POLLIN, deadline, "receive");
    ssize_t r = ::recv(fd_, out.data() + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(got == 0 ? Errc::connection_closed : Errc::truncated, sys_error("recv"));
    }
    if (r == 0) {
      if (got == 0) throw Error(Errc::connection_closed, "peer closed the connection");
      throw Error(Errc::truncated, "peer closed after " + std::to_string(got) + " of " + std::to_string(n) + " bytes");
    }
    got += static_cast<std::size_t>(r);
  }
  return out;
}

Listener Listener::bind(std::uint16_t port, const std::string& host) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::io_error, sys_error("socket"));
  Listener l;
  l.socket_ = Socket(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve_ipv4(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error(Errc::io_error, sys_error("bind " + host + ":" + std::to_string(port)));
  }
  if (::listen(fd, 8) != 0) throw Error(Errc::io_error, sys_error("listen"));
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  l.port_ = ntohs(addr.sin_port);
  return l;
}

std::optional<Socket> Listener::accept(std::optional<std::chrono::milliseconds> timeout) {
  std::optional<Clock::time_point> deadline;
  if (timeout) deadline = Clock::now() + *timeout;
  for (;;) {
    try {
      wait_for(socket_.fd(), POLLIN, deadline, "accept");
    } catch (const Error& e) {
      if (e.code() == Errc::timeout) return std::nullopt;
      throw;
    }
    int fd = ::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno != EINTR && errno != ECONNABORTED) throw Error(Errc::io_error, sys_error("accept"));
  }
}

Socket connect_to(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  sockaddr_in addr = resolve_ipv4(host, port);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!s.is_open()) throw Error(Errc::io_error, sys_error("socket"));
  std::string where = host + ":" + std::to_string(port);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) throw Error(Errc::connect_refused, sys_error(where));
    wait_for(s.fd(), POLLOUT, Clock::now() + timeout, "connect to " + where);
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw Error(Errc::connect_refused, where + ": " + std::strerror(err));
  }
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

void send_message(Socket& socket, const Message& message, const FrameIo& io) {
  socket.send_all(encode_frame(message, io.cap), io.deadline);
}

Message recv_message(Socket& socket, const FrameIo& io) {
  std::uint32_t length = decode_length(socket.recv_exact(4, io.deadline));
  if (length > io.cap) throw Error(Errc::oversize, "frame length " + std::to_string(length) + " exceeds the cap");
  std::string payload;
  try {
    payload = socket.recv_exact(length, io.deadline);
  } catch (const Error& e) {
    if (e.code() == Errc::connection_closed) throw Error(Errc::truncated, "peer closed inside a frame");
    throw;
  }
  return decode_message(payload);
}

}  // namespace fspm_bridge
