#include "sapo/node.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "sapo/seeds.hpp"

namespace sapo::node {

void NodeConfig::validate() const {
  if (node_id.empty()) throw NodeError("node_id must not be empty");
  if (specialties.empty()) throw NodeError("node " + node_id + " has no specialties");
  if (batch_size < 1) throw NodeError("batch_size must be positive");
  if (completions_per_question < 2) throw NodeError("completions_per_question must be at least 2");
  if (local_samples < 1) throw NodeError("local_samples must be at least 1");
  if (external_samples < 0) throw NodeError("external_samples must be non-negative");
  if (local_samples + external_samples != batch_size) {
    throw NodeError("local_samples + external_samples (" + std::to_string(local_samples) + " + " +
                    std::to_string(external_samples) + ") must equal batch_size " + std::to_string(batch_size));
  }
  if (!(share_fraction >= 0.0 && share_fraction <= 1.0)) throw NodeError("share_fraction must lie in [0, 1]");
  if (!(temperature > 0.0)) throw NodeError("temperature must be positive");
  if (max_new_tokens < 1) throw NodeError("max_new_tokens must be positive");
  grpo.validate();
}

std::string RoundReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["node_id"] = node_id;
  j["round"] = round;
  j["per_question_rewards"] = per_question_rewards;
  j["mean_reward"] = mean_reward;
  j["external_used"] = external_used;
  j["external_filtered"] = external_filtered;
  j["backfilled"] = backfilled;
  j["loss"] = loss ? nlohmann::ordered_json(*loss) : nlohmann::ordered_json(nullptr);
  j["external_skipped"] = external_skipped;
  j["shared"] = shared;
  j["peers_acknowledged"] = peers_acknowledged;
  j["unreached_peers"] = unreached_peers;
  j["tokens"] = tokens;
  if (error) j["error"] = *error;
  return j.dump() + '\n';
}

std::vector<taskgen::Question> sample_batch(const NodeConfig& config, std::uint64_t round) {
  if (config.specialties.empty()) throw NodeError("node " + config.node_id + " has no specialties");
  Rng pick(seeds::specialty_pick(config.seed, round));
  std::vector<taskgen::Question> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_size));
  for (int i = 0; i < config.batch_size; ++i) {
    const auto& spec = config.specialties[uniform_below(pick, config.specialties.size())];
    batch.push_back(taskgen::generate(spec, seeds::instance(config.seed, round, static_cast<std::uint64_t>(i))));
  }
  return batch;
}

namespace {

grpo::RolloutGroup finish_group(taskgen::Question question, std::vector<Sample> samples, const NodeConfig& config,
                                grpo::Origin origin) {
  grpo::RolloutGroup g;
  g.rewards.reserve(samples.size());
  for (const auto& s : samples) g.rewards.push_back(taskgen::verify(question, s.completion_text).score);
  g.advantages = grpo::compute_advantages(g.rewards, config.grpo.std_floor);
  g.question = std::move(question);
  g.samples = std::move(samples);
  g.origin = std::move(origin);
  return g;
}

}  // namespace

grpo::RolloutGroup generate_group(const PolicyState& state, const taskgen::Question& question,
                                  const NodeConfig& config, std::uint64_t rollout_seed) {
  SamplingOptions opts;
  opts.count = config.completions_per_question;
  opts.temperature = config.temperature;
  opts.max_new_tokens = config.max_new_tokens;
  opts.seed = rollout_seed;
  return finish_group(question, sample_completions(state, question.prompt, opts), config, grpo::Origin::local());
}

swarm::RolloutPacket to_packet(const grpo::RolloutGroup& group, const std::string& sender, std::uint64_t round) {
  swarm::RolloutPacket p;
  p.sender = sender;
  p.round = round;
  p.specialty = std::string(group.question.specialty.name());
  p.instance_seed = group.question.instance_seed;
  p.prompt = group.question.prompt;
  p.ground_truth = group.question.ground_truth;
  p.metadata = group.question.metadata.verifier_id;
  for (const auto& s : group.samples) p.completions.push_back(s.completion_text);
  return p;
}

std::optional<taskgen::Question> packet_question(const swarm::RolloutPacket& packet) {
  const auto id = taskgen::specialty_for_verifier(packet.metadata);
  if (!id || taskgen::to_string(*id) != packet.specialty) return std::nullopt;
  taskgen::Question q{taskgen::Specialty(*id), packet.prompt, packet.ground_truth, packet.instance_seed,
                      taskgen::VerifierMetadata{packet.metadata}};
  return q;
}

std::optional<grpo::RolloutGroup> convert_external(const swarm::RolloutPacket& packet, const NodeConfig& config,
                                                   const Architecture& arch) {
  if (packet.completions.size() < 2) return std::nullopt;
  auto question = packet_question(packet);
  if (!question) return std::nullopt;
  auto prompt = Vocab::try_encode(packet.prompt);
  if (!prompt) return std::nullopt;
  prompt->insert(prompt->begin(), Vocab::kBos);

  std::vector<Sample> samples;
  samples.reserve(packet.completions.size());
  for (const auto& text : packet.completions) {
    auto tokens = Vocab::try_encode(text);
    if (!tokens) return std::nullopt;
    if (static_cast<int>(tokens->size()) < config.max_new_tokens) tokens->push_back(Vocab::kEos);
    if (prompt->size() + tokens->size() > static_cast<std::size_t>(arch.context)) return std::nullopt;
    Sample s;
    s.prompt_tokens = *prompt;
    s.completion_tokens = std::move(*tokens);
    s.completion_text = text;
    samples.push_back(std::move(s));
  }
  return finish_group(std::move(*question), std::move(samples), config, grpo::Origin::from(packet.sender));
}

void score_external(const PolicyState& state, std::vector<grpo::RolloutGroup>& groups) {
  for (auto& g : groups) {
    if (g.samples.empty()) continue;
    std::vector<std::vector<Token>> completions;
    completions.reserve(g.samples.size());
    for (const auto& s : g.samples) completions.push_back(s.completion_tokens);
    auto lps = score_group(state, g.samples.front().prompt_tokens, completions);
    for (std::size_t i = 0; i < g.samples.size(); ++i) g.samples[i].token_logprobs = std::move(lps[i]);
  }
}

std::optional<grpo::RolloutGroup> emulate_external(const PolicyState& state, const swarm::RolloutPacket& packet,
                                                   const NodeConfig& config) {
  auto g = convert_external(packet, config, state.arch);
  if (!g) return std::nullopt;
  std::vector<grpo::RolloutGroup> one;
  one.push_back(std::move(*g));
  score_external(state, one);
  return std::move(one.front());
}

TrainingSet assemble_training_set(const std::vector<grpo::RolloutGroup>& local_groups,
                                  const std::vector<swarm::RolloutPacket>& pool_packets, const NodeConfig& config,
                                  const Architecture& arch, std::uint64_t round, Rng& rng) {
  TrainingSet set;
  set.round = round;
  const auto n_local = local_groups.size();
  const auto I = std::min<std::size_t>(static_cast<std::size_t>(config.local_samples), n_local);
  const auto J = static_cast<std::size_t>(config.external_samples);

  auto chosen = sample_without_replacement(rng, n_local, I);

  if (J > 0) {
    std::vector<grpo::RolloutGroup> survivors;
    for (const auto& packet : pool_packets) {
      auto g = convert_external(packet, config, arch);
      if (!g) {
        ++set.external_skipped;
        continue;
      }
      ++set.external_available;
      if (grpo::is_zero_advantage(*g)) {
        ++set.external_filtered;
        continue;
      }
      survivors.push_back(std::move(*g));
    }
    const auto take = std::min(J, survivors.size());
    for (auto idx : sample_without_replacement(rng, survivors.size(), take))
      set.external_groups.push_back(std::move(survivors[idx]));

    const auto deficit = J - take;
    if (deficit > 0) {
      std::vector<std::size_t> rest;
      std::vector<bool> used(n_local, false);
      for (auto i : chosen) used[i] = true;
      for (std::size_t i = 0; i < n_local; ++i)
        if (!used[i]) rest.push_back(i);
      const auto extra = std::min(deficit, rest.size());
      for (auto k : sample_without_replacement(rng, rest.size(), extra)) chosen.push_back(rest[k]);
      set.backfilled = extra;
      std::sort(chosen.begin(), chosen.end());
    }
  }
  for (auto i : chosen) set.local_groups.push_back(local_groups[i]);
  return set;
}

SapoNode::SapoNode(NodeConfig config, PolicyState initial, std::shared_ptr<swarm::SwarmPool> pool,
                   swarm::Transport* transport)
    : config_(std::move(config)), state_(std::move(initial)), pool_(std::move(pool)), transport_(transport) {
  config_.validate();
  state_.validate();
  if (!pool_) pool_ = std::make_shared<swarm::SwarmPool>();
}

void SapoNode::generate_and_share(std::uint64_t round) {
  const auto questions = sample_batch(config_, round);
  local_.clear();
  local_.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i)
    local_.push_back(generate_group(state_, questions[i], config_, seeds::rollout(config_.seed, round, i)));

  RoundReport report;
  report.node_id = config_.node_id;
  report.round = round;
  for (const auto& g : local_) {
    report.per_question_rewards.push_back(std::accumulate(g.rewards.begin(), g.rewards.end(), 0.0) /
                                          static_cast<double>(g.rewards.size()));
  }
  report.mean_reward = std::accumulate(report.per_question_rewards.begin(), report.per_question_rewards.end(), 0.0) /
                       static_cast<double>(report.per_question_rewards.size());

  const auto share_count =
      static_cast<std::size_t>(std::llround(config_.share_fraction * static_cast<double>(local_.size())));
  if (transport_ && share_count > 0) {
    Rng rng(seeds::share(config_.seed, round));
    std::vector<swarm::RolloutPacket> packets;
    for (auto i : sample_without_replacement(rng, local_.size(), share_count))
      packets.push_back(to_packet(local_[i], config_.node_id, round));
    const auto b = transport_->broadcast(config_.node_id, packets);
    report.shared = packets.size();
    report.peers_acknowledged = b.acknowledged;
    report.unreached_peers = b.unreached;
  }
  pending_report_ = std::move(report);
  pending_round_ = round;
}

RoundReport SapoNode::train(std::uint64_t round) {
  if (pending_round_ != round) throw NodeError("train(" + std::to_string(round) + ") without generate_and_share");
  pending_round_.reset();
  RoundReport report = std::move(pending_report_);

  std::vector<swarm::RolloutPacket> packets;
  if (config_.external_samples > 0) packets = pool_->poll(config_.node_id, round);
  Rng rng(seeds::assemble(config_.seed, round));
  last_set_ = assemble_training_set(local_, packets, config_, state_.arch, round, rng);
  score_external(state_, last_set_.external_groups);
  report.external_used = last_set_.external_groups.size();
  report.external_filtered = last_set_.external_filtered;
  report.external_skipped = last_set_.external_skipped;
  report.backfilled = last_set_.backfilled;

  std::vector<grpo::RolloutGroup> groups = last_set_.local_groups;
  groups.insert(groups.end(), last_set_.external_groups.begin(), last_set_.external_groups.end());

  const PolicyState snapshot = state_;
  try {
    const auto batch = grpo::build_batch(groups, config_.grpo);
    auto lg = loss_and_gradient(state_, batch, config_.execution);
    if (hook_) hook_(lg.gradient);
    grpo::adam_step(state_, lg.gradient, config_.grpo);
    report.loss = lg.loss;
    report.tokens = lg.tokens;
    ++completed_;
  } catch (const std::exception& e) {
    state_ = snapshot;
    report.error = e.what();
  }
  local_.clear();
  return report;
}

RoundReport SapoNode::run_round(std::uint64_t round) {
  generate_and_share(round);
  return train(round);
}

}  // namespace sapo::node
