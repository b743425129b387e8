#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "wire/message.hpp"

namespace rgma {

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; a bare port means localhost. Throws InvalidArgument.
  static HostPort parse(std::string_view text);
  std::string str() const { return host + ":" + std::to_string(port); }
  bool operator==(const HostPort&) const = default;
};

/// A framed, bidirectional message stream over one TCP socket.
/// send() may be called from any thread; receive() from one reader at a time.
class Connection {
 public:
  explicit Connection(int fd);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Throws ConnectionError when the endpoint cannot be reached in time.
  static std::shared_ptr<Connection> connect(const HostPort& endpoint, int timeoutMs);

  void send(const Message& message);
  /// Next message, or nullopt if none arrived within the timeout (negative waits forever).
  /// Throws ConnectionError when the peer closed the stream, FrameError/ProtocolError
  /// on a malformed frame.
  std::optional<Message> receive(int timeoutMs);
  /// Sends and waits for the reply with the same requestId; Error replies are thrown.
  Message call(const Message& request, int timeoutMs);

  /// Wakes any blocked reader and refuses further traffic.
  void shutdown();
  bool isShutdown() const { return shutdown_.load(); }
  std::string peer() const { return peer_; }

 private:
  int fd_;
  std::string peer_;
  std::mutex sendMutex_;
  std::string inbox_;
  std::atomic<bool> shutdown_{false};
};

std::string nextRequestId();

/// Accepts connections on one port and runs `handler` for each on its own thread.
class TcpServer {
 public:
  using Handler = std::function<void(const std::shared_ptr<Connection>&)>;

  TcpServer(const std::string& bindHost, std::uint16_t port, Handler handler);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  /// Closes the listener and every open connection, then joins all threads.
  void stop();

 private:
  void acceptLoop();
  void reap();

  struct Session {
    std::shared_ptr<Connection> conn;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  int listenFd_ = -1;
  std::uint16_t port_ = 0;
  Handler handler_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex sessionsMutex_;
  std::list<Session> sessions_;
};

}  // namespace rgma
