#pragma once

// One swarm participant: samples questions, generates and shares rollouts,
// builds a training set from its own groups and filtered groups received from
// peers, and takes one policy-gradient step per round.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sapo/grpo.hpp"
#include "sapo/policy.hpp"
#include "sapo/rng.hpp"
#include "sapo/swarmnet.hpp"
#include "sapo/taskgen.hpp"

namespace sapo::node {

class NodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NodeConfig {
  std::string node_id = "node-0";
  std::vector<taskgen::Specialty> specialties;
  int batch_size = 8;
  int completions_per_question = 8;
  int local_samples = 8;
  int external_samples = 0;
  double share_fraction = 1.0;
  grpo::GrpoConfig grpo;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int max_new_tokens = 160;
  Execution execution = Execution::parallel;

  /// Throws NodeError when I + J != batch size, I < 1, L < 2, and so on.
  void validate() const;
};

struct TrainingSet {
  std::vector<grpo::RolloutGroup> local_groups;
  std::vector<grpo::RolloutGroup> external_groups;
  std::uint64_t round = 0;
  std::size_t backfilled = 0;          // local groups added to cover an external shortfall
  std::size_t external_available = 0;  // packets converted successfully
  std::size_t external_filtered = 0;   // converted packets dropped as zero-advantage
  std::size_t external_skipped = 0;    // packets that could not be converted
};

struct RoundReport {
  std::string node_id;
  std::uint64_t round = 0;
  std::vector<double> per_question_rewards;  // mean reward of each own question
  double mean_reward = 0.0;
  std::size_t external_used = 0;
  std::size_t external_filtered = 0;
  std::size_t external_skipped = 0;
  std::size_t backfilled = 0;
  std::size_t shared = 0;
  std::size_t peers_acknowledged = 0;
  std::vector<std::string> unreached_peers;
  std::size_t tokens = 0;
  std::optional<double> loss;  // absent when the update was aborted
  std::optional<std::string> error;

  /// One JSON line, core fields first: {node_id, round, per_question_rewards,
  /// mean_reward, external_used, external_filtered, backfilled, loss, ...}.
  std::string to_json_line() const;
};

/// `batch_size` questions; specialties uniform with replacement, instance
/// seeds derived from (config.seed, round, index).
std::vector<taskgen::Question> sample_batch(const NodeConfig& config, std::uint64_t round);

/// Samples L completions for a question under `state` and scores them with
/// the local verifier.
grpo::RolloutGroup generate_group(const PolicyState& state, const taskgen::Question& question,
                                  const NodeConfig& config, std::uint64_t rollout_seed);

/// Packet for a local group as it travels on the wire.
swarm::RolloutPacket to_packet(const grpo::RolloutGroup& group, const std::string& sender, std::uint64_t round);

/// Rebuilds the question from the packet. nullopt when the metadata names no
/// known verifier or disagrees with the specialty.
std::optional<taskgen::Question> packet_question(const swarm::RolloutPacket& packet);

/// Re-encodes and re-verifies a packet's completions with the local verifier.
/// Completions shorter than max_new_tokens get EOS appended, as a locally
/// generated completion would. Samples carry no log-probs yet. nullopt if the
/// packet cannot be used (unknown verifier, unencodable text, context overflow).
std::optional<grpo::RolloutGroup> convert_external(const swarm::RolloutPacket& packet, const NodeConfig& config,
                                                   const Architecture& arch);

/// convert_external followed by scoring under `state`, so old log-probs are
/// the receiver's own pre-update values.
std::optional<grpo::RolloutGroup> emulate_external(const PolicyState& state, const swarm::RolloutPacket& packet,
                                                   const NodeConfig& config);

/// I local groups uniformly without replacement (no filter), then up to J
/// survivors of the zero-advantage filter over the pool, then a backfill of
/// unchosen local groups for any shortfall. External groups are not scored.
TrainingSet assemble_training_set(const std::vector<grpo::RolloutGroup>& local_groups,
                                  const std::vector<swarm::RolloutPacket>& pool_packets, const NodeConfig& config,
                                  const Architecture& arch, std::uint64_t round, Rng& rng);

/// Replaces the log-probs of every external sample with scores under `state`.
void score_external(const PolicyState& state, std::vector<grpo::RolloutGroup>& groups);

/// Sees the gradient before the optimizer does; may modify it. Used to inject
/// faults in tests.
using GradientHook = std::function<void(std::vector<double>&)>;

class SapoNode {
 public:
  /// `transport` may be null (a silo node). The node keeps `pool` for polling.
  SapoNode(NodeConfig config, PolicyState initial, std::shared_ptr<swarm::SwarmPool> pool,
           swarm::Transport* transport);

  /// Generation half of a round: sample the batch, roll out, score, share.
  void generate_and_share(std::uint64_t round);
  /// Training half: assemble, score externals, update. Requires a prior
  /// generate_and_share for the same round.
  RoundReport train(std::uint64_t round);
  /// Both halves.
  RoundReport run_round(std::uint64_t round);

  const PolicyState& state() const { return state_; }
  const NodeConfig& config() const { return config_; }
  const swarm::SwarmPool& pool() const { return *pool_; }
  /// Rounds whose update was applied.
  std::uint64_t completed_rounds() const { return completed_; }
  /// The training set of the most recent round.
  const TrainingSet& last_training_set() const { return last_set_; }

  void set_gradient_hook(GradientHook hook) { hook_ = std::move(hook); }

 private:
  NodeConfig config_;
  PolicyState state_;
  std::shared_ptr<swarm::SwarmPool> pool_;
  swarm::Transport* transport_;
  GradientHook hook_;
  std::uint64_t completed_ = 0;

  std::optional<std::uint64_t> pending_round_;
  std::vector<grpo::RolloutGroup> local_;
  RoundReport pending_report_;
  TrainingSet last_set_;
};

}  // namespace sapo::node
