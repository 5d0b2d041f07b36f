#ifndef BQO_TCP_HPP
#define BQO_TCP_HPP

#include "bqo/comm.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace bqo {

struct TcpOptions {
  std::chrono::milliseconds timeout = kDefaultCollectiveTimeout;
  bool sparse_contributions = true;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port".
Endpoint parse_endpoint(const std::string& text);

/// Listening socket for the coordinator. Port 0 binds an ephemeral port.
class TcpListener {
 public:
  explicit TcpListener(const Endpoint& endpoint);
  TcpListener(TcpListener&& other) noexcept;
  TcpListener& operator=(TcpListener&& other) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const { return port_; }
  int release();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Rank 0: accepts `size − 1` workers, then aggregates every collective.
std::unique_ptr<Cluster> tcp_coordinator(TcpListener listener, int size, TcpOptions options = {});

/// Rank > 0: connects to the coordinator (retrying until the timeout) and joins.
std::unique_ptr<Cluster> tcp_join(const Endpoint& coordinator, int rank, int size,
                                  TcpOptions options = {});

}  // namespace bqo

#endif  // BQO_TCP_HPP
