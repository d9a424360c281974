#pragma once

// Length-prefixed frames over TCP: a 4-byte big-endian payload length
// followed by the payload (a JSON line). Shared by the swarm socket
// transport and the judge server.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace sapo::net {

inline constexpr std::uint32_t kMaxFrame = 16u << 20;

std::string encode_frame(std::string_view payload);

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete payload, if any. Throws std::runtime_error on a frame
  /// larger than kMaxFrame.
  std::optional<std::string> next();

 private:
  std::string buffer_;
};

/// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  /// Stops further reads and writes without closing; wakes blocked readers.
  void shutdown();

 private:
  int fd_ = -1;
};

/// Listening socket on 127.0.0.1. Port 0 picks an ephemeral port.
Socket listen_loopback(std::uint16_t port);
std::uint16_t local_port(const Socket& s);

/// Returns an invalid socket on failure.
Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

/// Waits up to `timeout` for a connection; invalid socket on timeout.
Socket accept_for(const Socket& listener, std::chrono::milliseconds timeout);

void set_io_timeout(const Socket& s, std::chrono::milliseconds timeout);

bool write_all(const Socket& s, std::string_view bytes);
bool write_frame(const Socket& s, std::string_view payload);
/// nullopt on EOF, timeout, I/O error, or an oversized frame.
std::optional<std::string> read_frame(const Socket& s);

}  // namespace sapo::net
