#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <sys/types.h>

namespace pxd {

// Blocking byte stream with a per-operation timeout. Failures throw
// Errc::protocol.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_all(std::span<const std::byte> bytes) = 0;
  virtual void read_exact(std::span<std::byte> bytes) = 0;
  // Like read_exact, but returns false on a clean EOF before the first byte.
  virtual bool read_exact_or_eof(std::span<std::byte> bytes) = 0;
};

// Transport over a pair of file descriptors (a socket uses the same fd twice).
class FdTransport : public Transport {
 public:
  FdTransport(int read_fd, int write_fd, int timeout_ms, bool owns_fds, bool is_socket = false);
  ~FdTransport() override;
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  void write_all(std::span<const std::byte> bytes) override;
  void read_exact(std::span<std::byte> bytes) override;
  bool read_exact_or_eof(std::span<std::byte> bytes) override;

 private:
  bool read_impl(std::span<std::byte> bytes, bool eof_ok);
  int read_fd_, write_fd_, timeout_ms_;
  bool owns_, socket_;
};

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, int timeout_ms);

// Runs `command` through /bin/sh with its stdin/stdout connected to the
// returned transport. The child is terminated when the transport is destroyed.
std::unique_ptr<Transport> spawn_stdio(const std::string& command, int timeout_ms);

class TcpListener {
 public:
  // port 0 picks an ephemeral port; see port().
  explicit TcpListener(int port, const std::string& bind_host = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  int port() const noexcept { return port_; }
  // Waits for a client, polling `stop` every 100 ms; nullptr when stopped.
  std::unique_ptr<Transport> accept(int timeout_ms, const std::atomic<bool>* stop);

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace pxd
