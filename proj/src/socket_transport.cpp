#include "sapo/socket_transport.hpp"

namespace sapo::swarm {

namespace {

constexpr std::string_view kAck = "ok";

}  // namespace

SocketEndpoint::SocketEndpoint(std::string node_id, std::shared_ptr<SwarmPool> pool, std::uint16_t port,
                               std::chrono::milliseconds timeout)
    : node_id_(std::move(node_id)), pool_(std::move(pool)), timeout_(timeout) {
  listener_ = net::listen_loopback(port);
  port_ = net::local_port(listener_);
  acceptor_ = std::thread([this] { accept_loop(); });
}

SocketEndpoint::~SocketEndpoint() { stop(); }

void SocketEndpoint::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_mutex_);
    for (auto& c : inbound_) c->shutdown();
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
  inbound_.clear();
  listener_.close();
  std::lock_guard lock(send_mutex_);
  outbound_.clear();
}

void SocketEndpoint::set_peers(std::vector<PeerAddress> peers) {
  std::lock_guard lock(send_mutex_);
  peers_.clear();
  for (auto& p : peers)
    if (p.node_id != node_id_) peers_.push_back(std::move(p));
  outbound_.clear();
}

void SocketEndpoint::accept_loop() {
  while (!stopping_.load()) {
    auto conn = net::accept_for(listener_, std::chrono::milliseconds(50));
    if (!conn.valid()) continue;
    std::lock_guard lock(conn_mutex_);
    if (stopping_.load()) break;
    inbound_.push_back(std::make_unique<net::Socket>(std::move(conn)));
    auto* raw = inbound_.back().get();
    workers_.emplace_back([this, raw] { serve(raw); });
  }
}

void SocketEndpoint::serve(net::Socket* conn) {
  while (!stopping_.load()) {
    auto payload = net::read_frame(*conn);
    if (!payload) return;
    std::string reply(kAck);
    try {
      pool_->insert(deserialize(*payload));
    } catch (const std::exception& e) {
      ++rejected_;
      reply = std::string("error: ") + e.what();
    }
    if (!net::write_frame(*conn, reply)) return;
  }
}

BroadcastReport SocketEndpoint::broadcast(std::string_view node_id, std::span<const RolloutPacket> packets) {
  check_outgoing(node_id, packets);
  std::vector<std::string> frames;
  frames.reserve(packets.size());
  for (const auto& p : packets) frames.push_back(serialize(p));

  std::lock_guard lock(send_mutex_);
  BroadcastReport report;
  report.peers = peers_.size();
  if (packets.empty()) return report;
  for (const auto& peer : peers_) {
    auto& sock = outbound_[peer.node_id];
    if (!sock.valid()) sock = net::connect_tcp(peer.host, peer.port, timeout_);
    bool ok = sock.valid();
    for (std::size_t i = 0; ok && i < frames.size(); ++i) {
      ok = net::write_frame(sock, frames[i]);
      if (!ok) break;
      const auto reply = net::read_frame(sock);
      ok = reply && *reply == kAck;
    }
    if (ok) {
      ++report.acknowledged;
    } else {
      sock.close();
      report.unreached.push_back(peer.node_id);
    }
  }
  return report;
}

}  // namespace sapo::swarm
