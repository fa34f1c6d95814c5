/* Copyright 2026 The Orch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ORCH_UTIL_NET_HPP_
#define ORCH_UTIL_NET_HPP_

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "orch/util/result.hpp"

namespace orch {
namespace net {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  // shutdown() first so a reader blocked in recv() wakes up.
  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_ = -1;
};

inline Result<Socket, std::string> tcp_listen(const std::string& host, int port,
                                              int backlog = 64) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return std::string("socket: ") + std::strerror(errno);
  Socket sock(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    return "bad listen host: " + host;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    return std::string("bind: ") + std::strerror(errno);
  if (::listen(fd, backlog) != 0) return std::string("listen: ") + std::strerror(errno);
  return sock;
}

inline int local_port(const Socket& sock) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return -1;
  return ntohs(addr.sin_port);
}

inline Result<Socket, std::string> tcp_connect(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
    return "resolve failed: " + host;
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    return std::string("socket: ") + std::strerror(errno);
  }
  Socket sock(fd);
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) return std::string("connect: ") + std::strerror(errno);
  return sock;
}

inline Result<Socket, std::string> accept_conn(const Socket& listener) {
  int fd = ::accept(listener.fd(), nullptr, nullptr);
  if (fd < 0) return std::string("accept: ") + std::strerror(errno);
  return Socket(fd);
}

inline bool send_all(int fd, std::string_view data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Buffered newline framing over a blocking socket.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  // Returns the next line including its newline, or nullopt on EOF/error.
  std::optional<std::string> read_line() {
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl + 1);
        buf_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

// A port that was bindable at allocation time. The binding is held until
// release() so a sibling allocation cannot collide; the owner releases it
// just before the child rebinds.
class PortReservation {
 public:
  PortReservation() = default;
  explicit PortReservation(Socket sock, int port) : sock_(std::move(sock)), port_(port) {}

  int port() const { return port_; }
  bool held() const { return sock_.valid(); }
  void release() { sock_.close(); }

 private:
  Socket sock_;
  int port_ = 0;
};

// Returns a bound fd on 127.0.0.1:0, or -1. Injectable for exhaustion tests.
using PortBinder = std::function<int()>;

inline Result<PortReservation, std::string> allocate_port(const PortBinder& binder = {}) {
  int fd = -1;
  if (binder) {
    fd = binder();
  } else {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd >= 0) {
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = 0;
      ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
      if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        fd = -1;
      }
    }
  }
  if (fd < 0) return std::string("no-free-port");
  Socket sock(fd);
  const int port = local_port(sock);
  if (port <= 0) return std::string("no-free-port");
  return PortReservation(std::move(sock), port);
}

}  // namespace net
}  // namespace orch

#endif  // ORCH_UTIL_NET_HPP_
