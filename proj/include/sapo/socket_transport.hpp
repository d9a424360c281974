#pragma once

// Full-mesh loopback TCP transport. Each endpoint listens for packets from
// peers and inserts them into its own pool; broadcast sends one frame per
// packet to every peer and waits for a per-frame acknowledgement.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sapo/framing.hpp"
#include "sapo/swarmnet.hpp"

namespace sapo::swarm {

struct PeerAddress {
  std::string node_id;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

class SocketEndpoint final : public Transport {
 public:
  /// Starts listening immediately. `port` 0 picks an ephemeral port.
  SocketEndpoint(std::string node_id, std::shared_ptr<SwarmPool> pool, std::uint16_t port = 0,
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  ~SocketEndpoint() override;
  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  std::uint16_t port() const { return port_; }
  const std::string& node_id() const { return node_id_; }

  /// Entries naming this endpoint are ignored.
  void set_peers(std::vector<PeerAddress> peers);

  /// Returns after every reachable peer has acknowledged every packet, so the
  /// packets are already in their pools.
  BroadcastReport broadcast(std::string_view node_id, std::span<const RolloutPacket> packets) override;

  /// Stops the listener and closes every connection. Idempotent.
  void stop();

  /// Frames that failed to parse or insert on the receiving side.
  std::size_t rejected_frames() const { return rejected_.load(); }

 private:
  void accept_loop();
  void serve(net::Socket* conn);

  std::string node_id_;
  std::shared_ptr<SwarmPool> pool_;
  std::chrono::milliseconds timeout_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> rejected_{0};
  std::thread acceptor_;

  std::mutex conn_mutex_;
  std::vector<std::unique_ptr<net::Socket>> inbound_;
  std::vector<std::thread> workers_;

  std::mutex send_mutex_;
  std::vector<PeerAddress> peers_;
  std::map<std::string, net::Socket> outbound_;
};

}  // namespace sapo::swarm
