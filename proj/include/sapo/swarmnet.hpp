#pragma once

// Rollout packets, the per-node pool of received packets, and transports.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sapo::swarm {

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

/// The shared unit: one question, its ground truth, and the sender's decoded
/// completions. Rewards and log-probs never travel; receivers recompute them.
struct RolloutPacket {
  int schema_version = kSchemaVersion;
  std::string sender;
  std::uint64_t round = 0;
  std::string specialty;
  std::uint64_t instance_seed = 0;
  std::string prompt;
  std::string ground_truth;
  std::string metadata;  // verifier id
  std::vector<std::string> completions;

  friend bool operator==(const RolloutPacket&, const RolloutPacket&) = default;
};

/// One JSON object terminated by '\n', fields in wire order. Throws WireError
/// on empty completions or invalid UTF-8 anywhere in the packet.
std::string serialize(const RolloutPacket& packet);

/// Accepts a single line with or without the trailing newline. Throws
/// WireError on malformed JSON, missing or mistyped fields, empty completions,
/// or a schema_version other than kSchemaVersion.
RolloutPacket deserialize(std::string_view line);

/// Packets received by one node. Safe for concurrent insert and poll.
class SwarmPool {
 public:
  explicit SwarmPool(std::uint64_t staleness_window = 2, std::size_t capacity_per_sender = 64);

  /// Stores a packet. When a sender exceeds its capacity, its oldest packet
  /// (lowest round, then earliest arrival) is evicted.
  void insert(RolloutPacket packet);

  /// Packets from senders other than `node_id` whose round lies in
  /// [current_round - staleness_window, current_round], ordered by
  /// (sender, round, arrival).
  std::vector<RolloutPacket> poll(std::string_view node_id, std::uint64_t current_round) const;

  std::size_t size() const;
  std::uint64_t staleness_window() const { return staleness_window_; }
  std::size_t capacity_per_sender() const { return capacity_; }

 private:
  struct Entry {
    RolloutPacket packet;
    std::uint64_t arrival;
  };

  std::uint64_t staleness_window_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<Entry>, std::less<>> by_sender_;
  std::uint64_t next_arrival_ = 0;
};

struct BroadcastReport {
  std::size_t acknowledged = 0;  // peers that accepted every packet
  std::size_t peers = 0;
  std::vector<std::string> unreached;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Best effort: failures are reported, never thrown. Throws WireError only
  /// when the packets themselves are invalid for this sender.
  virtual BroadcastReport broadcast(std::string_view node_id, std::span<const RolloutPacket> packets) = 0;
};

/// Checks the broadcast precondition: every packet is from `node_id` and all
/// share one round.
void check_outgoing(std::string_view node_id, std::span<const RolloutPacket> packets);

/// Delivers directly into the pools of attached nodes.
class InMemoryTransport final : public Transport {
 public:
  void attach(std::string node_id, std::shared_ptr<SwarmPool> pool);
  void detach(std::string_view node_id);
  BroadcastReport broadcast(std::string_view node_id, std::span<const RolloutPacket> packets) override;

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SwarmPool>, std::less<>> pools_;
};

}  // namespace sapo::swarm
