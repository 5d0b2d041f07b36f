#include "bqo/tcp.hpp"

#include "bqo/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <thread>
#include <type_traits>
#include <utility>

namespace bqo {
namespace {

using Clock = std::chrono::steady_clock;
using wire::Frame;
using wire::MessageType;

// Upper bound on a frame payload; 2^30 slots plus sparse pairs.
constexpr std::uint64_t kMaxPayloadCount = (std::uint64_t{1} << 31) + 1;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

[[noreturn]] void fail_errno(const std::string& what) {
  throw CollectiveError(what + ": " + std::strerror(errno));
}

void wait_ready(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) throw CollectiveError("timed out waiting for peer");
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (rc > 0) return;
    if (rc < 0 && errno != EINTR) fail_errno("poll");
  }
}

void send_all(const Socket& s, std::span<const std::uint8_t> bytes, Clock::time_point deadline) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    wait_ready(s.fd(), POLLOUT, deadline);
    const ssize_t n = ::send(s.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail_errno("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void recv_exact(const Socket& s, std::uint8_t* out, std::size_t size, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < size) {
    wait_ready(s.fd(), POLLIN, deadline);
    const ssize_t n = ::recv(s.fd(), out + got, size - got, 0);
    if (n == 0) throw CollectiveError("peer disconnected");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail_errno("recv");
    }
    got += static_cast<std::size_t>(n);
  }
}

void send_frame(const Socket& s, const Frame& frame, Clock::time_point deadline) {
  send_all(s, wire::encode(frame), deadline);
}

Frame recv_frame(const Socket& s, Clock::time_point deadline) {
  std::vector<std::uint8_t> bytes(wire::kHeaderSize);
  recv_exact(s, bytes.data(), bytes.size(), deadline);
  wire::FrameHeader header;
  try {
    header = wire::decode_header(bytes);
  } catch (const std::exception& e) {
    throw CollectiveError(e.what());
  }
  if (header.type != MessageType::join && header.count > kMaxPayloadCount) {
    throw CollectiveError("frame: payload too large");
  }
  bytes.resize(wire::kHeaderSize + header.payload_bytes());
  recv_exact(s, bytes.data() + wire::kHeaderSize, header.payload_bytes(), deadline);
  return wire::decode(bytes);
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

sockaddr_in resolve(const Endpoint& endpoint) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string host = endpoint.host.empty() ? "127.0.0.1" : endpoint.host;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &found) != 0 || found == nullptr) {
    throw CollectiveError("cannot resolve host " + host);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, found->ai_addr, sizeof addr);
  ::freeaddrinfo(found);
  addr.sin_port = htons(endpoint.port);
  return addr;
}

class CollectiveGuard {
 public:
  explicit CollectiveGuard(std::atomic<bool>& busy) : busy_(busy) {
    if (busy_.exchange(true)) {
      throw std::logic_error("a collective is already outstanding on this cluster handle");
    }
  }
  ~CollectiveGuard() { busy_ = false; }
  CollectiveGuard(const CollectiveGuard&) = delete;
  CollectiveGuard& operator=(const CollectiveGuard&) = delete;

 private:
  std::atomic<bool>& busy_;
};

class TcpCoordinator final : public Cluster {
 public:
  TcpCoordinator(std::vector<Socket> workers, TcpOptions options)
      : workers_(std::move(workers)), options_(options) {}

  int rank() const override { return 0; }
  int size() const override { return static_cast<int>(workers_.size()); }

  ModelVector allreduce_sum(const ModelVector& values) override {
    CollectiveGuard guard(busy_);
    check_alive();
    return guarded([&] {
      const auto deadline = Clock::now() + options_.timeout;
      reduce::VectorSum acc(values.size());
      acc.add_dense(values);
      for (std::size_t r = 1; r < workers_.size(); ++r) {
        Frame f = recv_frame(workers_[r], deadline);
        if (f.type == MessageType::vector_contribution) {
          acc.add_dense(Eigen::Map<const ModelVector>(f.payload.data(),
                                                      static_cast<Eigen::Index>(f.payload.size())));
        } else if (f.type == MessageType::sparse_vector_contribution) {
          const wire::SparseView view = wire::decode_sparse(f.payload);
          if (view.dimension != static_cast<std::uint64_t>(values.size())) {
            throw CollectiveError("allreduce: vector length mismatch");
          }
          acc.add_sparse(view.indices, view.values);
        } else {
          throw unexpected(f, r);
        }
      }
      ModelVector& sum = acc.result();
      broadcast(wire::make_frame(MessageType::reduced_vector, 0,
                                 std::vector<double>(sum.data(), sum.data() + sum.size())),
                deadline);
      return std::move(sum);
    });
  }

  std::vector<double> allreduce_scalars(std::span<const double> values,
                                        std::span<const ReduceOp> ops,
                                        const ScalarFinalizer& finalize) override {
    reduce::check_scalar_request(values, ops);
    CollectiveGuard guard(busy_);
    check_alive();
    return guarded([&] {
      const auto deadline = Clock::now() + options_.timeout;
      std::vector<std::vector<double>> parts;
      parts.emplace_back(values.begin(), values.end());
      for (std::size_t r = 1; r < workers_.size(); ++r) {
        Frame f = recv_frame(workers_[r], deadline);
        if (f.type != MessageType::scalar_contribution) throw unexpected(f, r);
        parts.push_back(std::move(f.payload));
      }
      std::vector<const std::vector<double>*> ordered;
      for (const auto& p : parts) ordered.push_back(&p);
      std::vector<double> out = reduce::scalars_in_rank_order(ordered, ops);
      if (finalize) finalize(out);
      broadcast(wire::make_frame(MessageType::reduced_scalars, 0, out), deadline);
      return out;
    });
  }

  void barrier() override {
    CollectiveGuard guard(busy_);
    check_alive();
    guarded([&] {
      const auto deadline = Clock::now() + options_.timeout;
      for (std::size_t r = 1; r < workers_.size(); ++r) {
        Frame f = recv_frame(workers_[r], deadline);
        if (f.type != MessageType::barrier) throw unexpected(f, r);
      }
      broadcast(wire::make_frame(MessageType::barrier, 0, {}), deadline);
      return 0;
    });
  }

 private:
  static CollectiveError unexpected(const Frame& f, std::size_t rank) {
    if (f.type == MessageType::error) {
      return CollectiveError("worker " + std::to_string(rank) + " reported a failure");
    }
    return CollectiveError("mismatched collective from worker " + std::to_string(rank));
  }

  void check_alive() const {
    if (failed_) throw CollectiveError("cluster already failed");
  }

  void broadcast(const Frame& frame, Clock::time_point deadline) {
    const auto bytes = wire::encode(frame);
    for (std::size_t r = 1; r < workers_.size(); ++r) send_all(workers_[r], bytes, deadline);
  }

  // On any failure, tell every worker before rethrowing so all participants
  // observe the error.
  template <typename F>
  std::invoke_result_t<F&> guarded(F&& body) {
    try {
      return body();
    } catch (const std::exception& e) {
      failed_ = true;
      const auto bytes = wire::encode(wire::make_frame(MessageType::error, 0, {}));
      for (std::size_t r = 1; r < workers_.size(); ++r) {
        if (!workers_[r].valid()) continue;
        ::send(workers_[r].fd(), bytes.data(), bytes.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
      }
      throw CollectiveError(e.what());
    }
  }

  std::vector<Socket> workers_;  // index = rank; slot 0 unused
  TcpOptions options_;
  std::atomic<bool> busy_{false};
  bool failed_ = false;
};

class TcpWorker final : public Cluster {
 public:
  TcpWorker(Socket socket, int rank, int size, TcpOptions options)
      : socket_(std::move(socket)), rank_(rank), size_(size), options_(options) {}

  int rank() const override { return rank_; }
  int size() const override { return size_; }

  ModelVector allreduce_sum(const ModelVector& values) override {
    CollectiveGuard guard(busy_);
    const std::span<const double> dense(values.data(), static_cast<std::size_t>(values.size()));
    Frame request = options_.sparse_contributions && wire::prefer_sparse(dense)
                        ? wire::make_frame(MessageType::sparse_vector_contribution, me(),
                                           wire::encode_sparse(dense))
                        : wire::make_frame(MessageType::vector_contribution, me(),
                                           {dense.begin(), dense.end()});
    Frame reply = round_trip(request, MessageType::reduced_vector);
    if (reply.payload.size() != dense.size()) throw CollectiveError("allreduce: length mismatch");
    return Eigen::Map<const ModelVector>(reply.payload.data(), values.size());
  }

  std::vector<double> allreduce_scalars(std::span<const double> values,
                                        std::span<const ReduceOp> ops,
                                        const ScalarFinalizer&) override {
    reduce::check_scalar_request(values, ops);
    CollectiveGuard guard(busy_);
    Frame reply = round_trip(
        wire::make_frame(MessageType::scalar_contribution, me(), {values.begin(), values.end()}),
        MessageType::reduced_scalars);
    return std::move(reply.payload);
  }

  void barrier() override {
    CollectiveGuard guard(busy_);
    round_trip(wire::make_frame(MessageType::barrier, me(), {}), MessageType::barrier);
  }

 private:
  std::uint32_t me() const { return static_cast<std::uint32_t>(rank_); }

  Frame round_trip(const Frame& request, MessageType expected) {
    if (failed_) throw CollectiveError("cluster already failed");
    try {
      const auto deadline = Clock::now() + options_.timeout;
      send_frame(socket_, request, deadline);
      Frame reply = recv_frame(socket_, deadline);
      if (reply.type == MessageType::error) throw CollectiveError("coordinator reported a failure");
      if (reply.type != expected) throw CollectiveError("unexpected reply from coordinator");
      return reply;
    } catch (const CollectiveError&) {
      failed_ = true;
      socket_.close();
      throw;
    }
  }

  Socket socket_;
  int rank_;
  int size_;
  TcpOptions options_;
  std::atomic<bool> busy_{false};
  bool failed_ = false;
};

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected HOST:PORT, got " + text);
  Endpoint e;
  e.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long value = 0;
  try {
    value = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || port.empty() || value > 65535) {
    throw std::invalid_argument("invalid port in " + text);
  }
  e.port = static_cast<std::uint16_t>(value);
  return e;
}

TcpListener::TcpListener(const Endpoint& endpoint) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail_errno("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(endpoint);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    fail_errno("bind");
  }
  if (::listen(fd_, 64) != 0) {
    ::close(fd_);
    fail_errno("listen");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::TcpListener(TcpListener&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    port_ = other.port_;
  }
  return *this;
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

int TcpListener::release() { return std::exchange(fd_, -1); }

std::unique_ptr<Cluster> tcp_coordinator(TcpListener listener, int size, TcpOptions options) {
  if (size < 1) throw std::invalid_argument("cluster size must be at least 1");
  Socket server(listener.release());
  const auto deadline = Clock::now() + options.timeout;
  std::vector<Socket> workers(static_cast<std::size_t>(size));
  int joined = 1;
  while (joined < size) {
    wait_ready(server.fd(), POLLIN, deadline);
    Socket peer(::accept(server.fd(), nullptr, nullptr));
    if (!peer.valid()) {
      if (errno == EINTR) continue;
      fail_errno("accept");
    }
    set_nodelay(peer.fd());
    Frame join;
    try {
      join = recv_frame(peer, deadline);
    } catch (const CollectiveError&) {
      continue;
    }
    const bool valid = join.type == MessageType::join &&
                       join.count == static_cast<std::uint64_t>(size) && join.rank >= 1 &&
                       join.rank < static_cast<std::uint32_t>(size) && !workers[join.rank].valid();
    if (!valid) {
      try {
        send_frame(peer, wire::make_frame(MessageType::error, 0, {}), deadline);
      } catch (const CollectiveError&) {
      }
      continue;
    }
    workers[join.rank] = std::move(peer);
    ++joined;
  }
  const auto ack = wire::encode(wire::make_join(0, static_cast<std::uint32_t>(size)));
  for (int r = 1; r < size; ++r) send_all(workers[static_cast<std::size_t>(r)], ack, deadline);
  return std::make_unique<TcpCoordinator>(std::move(workers), options);
}

std::unique_ptr<Cluster> tcp_join(const Endpoint& coordinator, int rank, int size,
                                  TcpOptions options) {
  if (rank < 1 || rank >= size) throw std::invalid_argument("worker rank must lie in [1, size)");
  const auto deadline = Clock::now() + options.timeout;
  const sockaddr_in addr = resolve(coordinator);
  Socket s;
  for (;;) {
    s = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) fail_errno("socket");
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) break;
    if (Clock::now() >= deadline) fail_errno("connect");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  set_nodelay(s.fd());
  send_frame(s, wire::make_join(static_cast<std::uint32_t>(rank), static_cast<std::uint32_t>(size)),
             deadline);
  const Frame ack = recv_frame(s, deadline);
  if (ack.type != MessageType::join || ack.count != static_cast<std::uint64_t>(size)) {
    throw CollectiveError("coordinator rejected the join request");
  }
  return std::make_unique<TcpWorker>(std::move(s), rank, size, options);
}

}  // namespace bqo
