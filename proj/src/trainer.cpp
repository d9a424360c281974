#include "sapo/trainer.hpp"

#include "sapo/seeds.hpp"

namespace sapo {

StandaloneTrainer::StandaloneTrainer(TrainerConfig config, PolicyState initial)
    : config_(std::move(config)), state_(std::move(initial)) {
  if (config_.specialties.empty()) throw std::invalid_argument("trainer needs at least one specialty");
  config_.grpo.validate();
  state_.validate();
}

TrainerStep StandaloneTrainer::step(std::uint64_t round) {
  Rng pick(seeds::specialty_pick(config_.seed, round));
  std::vector<grpo::RolloutGroup> groups;
  double reward_sum = 0.0;
  for (int i = 0; i < config_.batch_size; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    const auto& spec = config_.specialties[uniform_below(pick, config_.specialties.size())];
    auto question = taskgen::generate(spec, seeds::instance(config_.seed, round, idx));

    SamplingOptions opts;
    opts.count = config_.completions_per_question;
    opts.temperature = config_.temperature;
    opts.max_new_tokens = config_.max_new_tokens;
    opts.seed = seeds::rollout(config_.seed, round, idx);

    grpo::RolloutGroup g;
    g.samples = sample_completions(state_, question.prompt, opts);
    for (const auto& s : g.samples) g.rewards.push_back(taskgen::verify(question, s.completion_text).score);
    g.advantages = grpo::compute_advantages(g.rewards, config_.grpo.std_floor);
    g.question = std::move(question);
    double sum = 0.0;
    for (double r : g.rewards) sum += r;
    reward_sum += sum / static_cast<double>(g.rewards.size());
    groups.push_back(std::move(g));
  }
  const auto stats = grpo::policy_gradient_step(state_, groups, config_.grpo, Execution::serial);
  return {reward_sum / config_.batch_size, stats.loss};
}

}  // namespace sapo
