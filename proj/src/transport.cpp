#include "transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "error.hpp"

extern char** environ;

namespace pxd {

namespace {

std::string errno_text() { return std::strerror(errno); }

void wait_ready(int fd, short events, int timeout_ms) {
  pollfd p{fd, events, 0};
  for (;;) {
    int r = ::poll(&p, 1, timeout_ms);
    if (r > 0) return;
    if (r == 0) fail(Errc::protocol, "timed out after " + std::to_string(timeout_ms / 1000.0) + " s");
    if (errno != EINTR) fail(Errc::protocol, "poll failed: " + errno_text());
  }
}

}  // namespace

FdTransport::FdTransport(int read_fd, int write_fd, int timeout_ms, bool owns_fds, bool is_socket)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_ms_(timeout_ms), owns_(owns_fds), socket_(is_socket) {}

FdTransport::~FdTransport() {
  if (!owns_) return;
  ::close(read_fd_);
  if (write_fd_ != read_fd_) ::close(write_fd_);
}

void FdTransport::write_all(std::span<const std::byte> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    wait_ready(write_fd_, POLLOUT, timeout_ms_);
    ssize_t n = socket_ ? ::send(write_fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL)
                        : ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(Errc::protocol, "write failed: " + errno_text());
    }
    done += static_cast<std::size_t>(n);
  }
}

bool FdTransport::read_impl(std::span<std::byte> bytes, bool eof_ok) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    wait_ready(read_fd_, POLLIN, timeout_ms_);
    ssize_t n = ::read(read_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail(Errc::protocol, "read failed: " + errno_text());
    }
    if (n == 0) {
      if (done == 0 && eof_ok) return false;
      fail(Errc::protocol, "connection closed after " + std::to_string(done) + " of " +
                               std::to_string(bytes.size()) + " expected bytes (truncated frame)");
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

void FdTransport::read_exact(std::span<std::byte> bytes) { read_impl(bytes, false); }
bool FdTransport::read_exact_or_eof(std::span<std::byte> bytes) { return read_impl(bytes, true); }

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, int timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_s = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res); rc != 0)
    fail(Errc::backend, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  std::string last = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last = errno_text();
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) fail(Errc::backend, "cannot connect to " + host + ":" + port_s + ": " + last);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<FdTransport>(fd, fd, timeout_ms, true, true);
}

namespace {

class ChildTransport : public FdTransport {
 public:
  ChildTransport(int read_fd, int write_fd, int timeout_ms, pid_t pid)
      : FdTransport(read_fd, write_fd, timeout_ms, false), read_fd_(read_fd), write_fd_(write_fd), pid_(pid) {}
  ~ChildTransport() override {
    ::close(write_fd_);
    ::close(read_fd_);
    int status = 0;
    // Closing stdin lets a well-behaved server exit on its own.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(20000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }

 private:
  int read_fd_, write_fd_;
  pid_t pid_;
};

}  // namespace

std::unique_ptr<Transport> spawn_stdio(const std::string& command, int timeout_ms) {
  // A dead child would otherwise kill us with SIGPIPE on the next write.
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0)
    fail(Errc::backend, "pipe failed: " + errno_text());
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_t pid = 0;
  int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char**>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    fail(Errc::backend, "cannot spawn '" + command + "': " + std::strerror(rc));
  }
  return std::make_unique<ChildTransport>(from_child[0], to_child[1], timeout_ms, pid);
}

TcpListener::TcpListener(int port, const std::string& bind_host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) fail(Errc::io, "socket failed: " + errno_text());
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    fail(Errc::invalid_argument, "bad bind address '" + bind_host + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    std::string why = errno_text();
    ::close(fd_);
    fail(Errc::io, "cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept(int timeout_ms, const std::atomic<bool>* stop) {
  for (;;) {
    if (stop != nullptr && stop->load()) return nullptr;
    pollfd p{fd_, POLLIN, 0};
    int r = ::poll(&p, 1, 100);
    if (r < 0 && errno != EINTR) fail(Errc::io, "poll failed: " + errno_text());
    if (r <= 0) continue;
    int client = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) {
      if (errno == EINTR) continue;
      fail(Errc::io, "accept failed: " + errno_text());
    }
    int one = 1;
    ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<FdTransport>(client, client, timeout_ms, true, true);
  }
}

}  // namespace pxd
