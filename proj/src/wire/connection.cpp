#include "wire/connection.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>

#include <spdlog/spdlog.h>

namespace rgma {

namespace {

std::int64_t steadyMs() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

std::string describePeer(int fd) {
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  if (::getpeername(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return "?";
  char host[NI_MAXHOST];
  char serv[NI_MAXSERV];
  if (::getnameinfo(reinterpret_cast<sockaddr*>(&addr), len, host, sizeof host, serv, sizeof serv,
                    NI_NUMERICHOST | NI_NUMERICSERV) != 0) {
    return "?";
  }
  return std::string(host) + ":" + serv;
}

}  // namespace

HostPort HostPort::parse(std::string_view text) {
  HostPort hp;
  std::string_view portText = text;
  const auto colon = text.rfind(':');
  if (colon != std::string_view::npos) {
    hp.host = std::string(text.substr(0, colon));
    portText = text.substr(colon + 1);
    if (hp.host.empty()) hp.host = "127.0.0.1";
  }
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(portText.data(), portText.data() + portText.size(), value);
  if (ec != std::errc() || ptr != portText.data() + portText.size() || value > 65535 || portText.empty()) {
    fail(ErrorCode::InvalidArgument, "bad endpoint '" + std::string(text) + "', expected HOST:PORT");
  }
  hp.port = static_cast<std::uint16_t>(value);
  return hp;
}

std::string nextRequestId() {
  static std::atomic<std::uint64_t> counter{1};
  return "r" + std::to_string(counter.fetch_add(1));
}

Connection::Connection(int fd) : fd_(fd), peer_(describePeer(fd)) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Connection::~Connection() {
  if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<Connection> Connection::connect(const HostPort& endpoint, int timeoutMs) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    fail(ErrorCode::Connection, "cannot resolve " + endpoint.str());
  }
  std::string lastError = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, timeoutMs < 0 ? -1 : timeoutMs);
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        if (rc == 0) errno = ETIMEDOUT;
        rc = -1;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      ::freeaddrinfo(res);
      return std::make_shared<Connection>(fd);
    }
    lastError = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  fail(ErrorCode::Connection, "cannot connect to " + endpoint.str() + ": " + lastError);
}

void Connection::send(const Message& message) {
  const std::string bytes = frame(message);
  std::lock_guard lock(sendMutex_);
  if (shutdown_) fail(ErrorCode::Connection, "connection to " + peer_ + " is closed");
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Connection, "send to " + peer_ + " failed: " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<Message> Connection::receive(int timeoutMs) {
  const std::int64_t deadline = timeoutMs < 0 ? -1 : steadyMs() + timeoutMs;
  while (true) {
    if (inbox_.size() >= 4) {
      const auto* p = reinterpret_cast<const unsigned char*>(inbox_.data());
      const std::uint32_t len = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                                (std::uint32_t{p[2]} << 8) | p[3];
      if (len == 0) fail(ErrorCode::Frame, "zero-length frame");
      if (len > kMaxFrameBytes) fail(ErrorCode::Frame, "frame length exceeds the limit");
      if (inbox_.size() >= 4 + std::size_t{len}) {
        Message m = decodePayload(std::string_view(inbox_).substr(4, len));
        inbox_.erase(0, 4 + std::size_t{len});
        return m;
      }
    }
    if (shutdown_) fail(ErrorCode::Connection, "connection to " + peer_ + " is closed");
    int wait = -1;
    if (deadline >= 0) {
      wait = static_cast<int>(std::max<std::int64_t>(0, deadline - steadyMs()));
    }
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, wait);
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Connection, std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) return std::nullopt;
    char buf[1 << 16];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(ErrorCode::Connection, "receive from " + peer_ + " failed: " + std::strerror(errno));
    }
    if (n == 0) {
      if (!inbox_.empty()) fail(ErrorCode::Frame, "connection closed inside a frame");
      fail(ErrorCode::Connection, "connection closed by " + peer_);
    }
    inbox_.append(buf, static_cast<std::size_t>(n));
  }
}

Message Connection::call(const Message& request, int timeoutMs) {
  send(request);
  const std::int64_t deadline = timeoutMs < 0 ? -1 : steadyMs() + timeoutMs;
  while (true) {
    const int wait = deadline < 0 ? -1 : static_cast<int>(std::max<std::int64_t>(0, deadline - steadyMs()));
    auto reply = receive(wait);
    if (!reply) fail(ErrorCode::Timeout, "no reply from " + peer_ + " within " + std::to_string(timeoutMs) + " ms");
    if (reply->requestId != request.requestId) continue;
    throwIfError(*reply);
    return std::move(*reply);
  }
}

void Connection::shutdown() {
  if (!shutdown_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
}

TcpServer::TcpServer(const std::string& bindHost, std::uint16_t port, Handler handler)
    : handler_(std::move(handler)) {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listenFd_ < 0) fail(ErrorCode::Connection, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bindHost.c_str(), &addr.sin_addr) != 1) {
    ::close(listenFd_);
    fail(ErrorCode::InvalidArgument, "bind address must be an IPv4 literal: " + bindHost);
  }
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listenFd_, 128) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listenFd_);
    fail(ErrorCode::Connection, "cannot listen on " + bindHost + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { acceptLoop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::acceptLoop() {
  while (!stopping_) {
    pollfd p{listenFd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 200);
    reap();
    if (rc <= 0) continue;
    const int fd = ::accept4(listenFd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    auto conn = std::make_shared<Connection>(fd);
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(sessionsMutex_);
    if (stopping_) {
      conn->shutdown();
      break;
    }
    sessions_.push_back(Session{conn, std::thread([this, conn, done] {
                                  try {
                                    handler_(conn);
                                  } catch (const std::exception& e) {
                                    spdlog::debug("connection {} ended: {}", conn->peer(), e.what());
                                  }
                                  conn->shutdown();
                                  done->store(true);
                                }),
                                done});
  }
}

void TcpServer::reap() {
  std::lock_guard lock(sessionsMutex_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (it->done->load()) {
      it->thread.join();
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listenFd_);
  std::list<Session> sessions;
  {
    std::lock_guard lock(sessionsMutex_);
    sessions.swap(sessions_);
  }
  for (auto& s : sessions) s.conn->shutdown();
  for (auto& s : sessions) {
    if (s.thread.joinable()) s.thread.join();
  }
}

}  // namespace rgma
