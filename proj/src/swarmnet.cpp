#include "sapo/swarmnet.hpp"

#include <algorithm>

#include "json.hpp"

namespace sapo::swarm {

using ordered_json = nlohmann::ordered_json;

std::string serialize(const RolloutPacket& p) {
  if (p.completions.empty()) throw WireError("packet has no completions");
  ordered_json j;
  j["schema_version"] = p.schema_version;
  j["sender"] = p.sender;
  j["round"] = p.round;
  j["specialty"] = p.specialty;
  j["instance_seed"] = p.instance_seed;
  j["prompt"] = p.prompt;
  j["ground_truth"] = p.ground_truth;
  j["metadata"] = p.metadata;
  j["completions"] = p.completions;
  try {
    return j.dump() + '\n';
  } catch (const nlohmann::json::type_error& e) {
    throw WireError(std::string("packet is not valid UTF-8: ") + e.what());
  }
}

namespace {

template <class T>
T field(const ordered_json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw WireError(std::string("packet field '") + name + "' is missing");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw WireError(std::string("packet field '") + name + "' has the wrong type");
  }
}

}  // namespace

RolloutPacket deserialize(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw WireError(std::string("malformed packet: ") + e.what());
  }
  if (!j.is_object()) throw WireError("packet is not a JSON object");
  const auto version_it = j.find("schema_version");
  if (version_it == j.end() || !version_it->is_number_integer()) {
    throw WireError("packet field 'schema_version' is missing");
  }
  const auto version = version_it->get<std::int64_t>();
  if (version != kSchemaVersion) throw WireError("unsupported schema_version " + std::to_string(version));
  const auto& round = j["round"];
  const auto& seed = j["instance_seed"];
  if (!round.is_number_unsigned() && !(round.is_number_integer() && round.get<std::int64_t>() >= 0)) {
    throw WireError("packet field 'round' must be a non-negative integer");
  }
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw WireError("packet field 'instance_seed' must be a non-negative integer");
  }

  RolloutPacket p;
  p.schema_version = kSchemaVersion;
  p.sender = field<std::string>(j, "sender");
  p.round = round.get<std::uint64_t>();
  p.specialty = field<std::string>(j, "specialty");
  p.instance_seed = seed.get<std::uint64_t>();
  p.prompt = field<std::string>(j, "prompt");
  p.ground_truth = field<std::string>(j, "ground_truth");
  p.metadata = field<std::string>(j, "metadata");
  p.completions = field<std::vector<std::string>>(j, "completions");
  if (p.completions.empty()) throw WireError("packet has no completions");
  return p;
}

SwarmPool::SwarmPool(std::uint64_t staleness_window, std::size_t capacity_per_sender)
    : staleness_window_(staleness_window), capacity_(capacity_per_sender) {
  if (capacity_ == 0) throw std::invalid_argument("pool capacity must be positive");
}

void SwarmPool::insert(RolloutPacket packet) {
  std::lock_guard lock(mutex_);
  auto& queue = by_sender_[packet.sender];
  queue.push_back({std::move(packet), next_arrival_++});
  while (queue.size() > capacity_) {
    auto oldest = std::min_element(queue.begin(), queue.end(), [](const Entry& a, const Entry& b) {
      return a.packet.round != b.packet.round ? a.packet.round < b.packet.round : a.arrival < b.arrival;
    });
    queue.erase(oldest);
  }
}

std::vector<RolloutPacket> SwarmPool::poll(std::string_view node_id, std::uint64_t current_round) const {
  const std::uint64_t lo = current_round > staleness_window_ ? current_round - staleness_window_ : 0;
  std::vector<const Entry*> hits;
  std::lock_guard lock(mutex_);
  for (const auto& [sender, queue] : by_sender_) {
    if (sender == node_id) continue;
    const auto first = hits.size();
    for (const auto& e : queue)
      if (e.packet.round >= lo && e.packet.round <= current_round) hits.push_back(&e);
    std::stable_sort(hits.begin() + static_cast<std::ptrdiff_t>(first), hits.end(),
                     [](const Entry* a, const Entry* b) {
                       return a->packet.round != b->packet.round ? a->packet.round < b->packet.round
                                                                 : a->arrival < b->arrival;
                     });
  }
  std::vector<RolloutPacket> out;
  out.reserve(hits.size());
  for (const auto* e : hits) out.push_back(e->packet);
  return out;
}

std::size_t SwarmPool::size() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, q] : by_sender_) n += q.size();
  return n;
}

void check_outgoing(std::string_view node_id, std::span<const RolloutPacket> packets) {
  for (const auto& p : packets) {
    if (p.sender != node_id) throw WireError("packet sender '" + p.sender + "' is not the broadcasting node");
    if (p.round != packets.front().round) throw WireError("broadcast packets must share one round");
    if (p.completions.empty()) throw WireError("packet has no completions");
  }
}

void InMemoryTransport::attach(std::string node_id, std::shared_ptr<SwarmPool> pool) {
  std::lock_guard lock(mutex_);
  pools_[std::move(node_id)] = std::move(pool);
}

void InMemoryTransport::detach(std::string_view node_id) {
  std::lock_guard lock(mutex_);
  if (auto it = pools_.find(node_id); it != pools_.end()) pools_.erase(it);
}

BroadcastReport InMemoryTransport::broadcast(std::string_view node_id, std::span<const RolloutPacket> packets) {
  check_outgoing(node_id, packets);
  std::vector<std::shared_ptr<SwarmPool>> targets;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, pool] : pools_)
      if (id != node_id) targets.push_back(pool);
  }
  BroadcastReport report;
  report.peers = targets.size();
  if (packets.empty()) return report;
  for (auto& pool : targets)
    for (const auto& p : packets) pool->insert(p);
  report.acknowledged = targets.size();
  return report;
}

}  // namespace sapo::swarm
