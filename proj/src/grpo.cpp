#include "sapo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sapo::grpo {

void GrpoConfig::validate() const {
  if (!(eps_low > 0.0) || !(eps_high >= eps_low)) throw GrpoError("need 0 < eps_low <= eps_high");
  if (eps_low >= 1.0) throw GrpoError("eps_low must be below 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw GrpoError("learning_rate must be positive");
  if (!(std_floor > 0.0)) throw GrpoError("std_floor must be positive");
  if (kl_weight != 0.0) throw GrpoError("kl_weight must be 0: KL-regularized updates are not implemented");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw GrpoError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw GrpoError("adam_eps must be positive");
}

void RolloutGroup::validate() const {
  if (rewards.size() != samples.size() || advantages.size() != samples.size()) {
    throw GrpoError("rollout group needs one reward and one advantage per sample");
  }
  for (double r : rewards)
    if (!(r >= 0.0 && r <= 1.0)) throw GrpoError("reward outside [0, 1]");
}

std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw GrpoError("group statistics need at least 2 rewards");
  const auto n = static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return adv;
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double denom = std::sqrt(var / n) + std_floor;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

bool is_zero_advantage(const RolloutGroup& group) {
  return std::all_of(group.advantages.begin(), group.advantages.end(), [](double a) { return a == 0.0; });
}

double surrogate_loss(std::span<const double> ratios, std::span<const double> advantages, const GrpoConfig& cfg) {
  if (ratios.size() != advantages.size()) throw GrpoError("ratios and advantages differ in length");
  if (ratios.empty()) throw GrpoError("surrogate over zero tokens");
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!std::isfinite(ratios[i]) || !(ratios[i] > 0.0)) {
      throw GrpoError("ratio at token " + std::to_string(i) + " is not a finite positive number");
    }
    sum += clipped_token_loss(ratios[i], advantages[i], cfg.clip());
  }
  return sum / static_cast<double>(ratios.size());
}

void adam_step(PolicyState& state, std::span<const double> gradient, const GrpoConfig& cfg) {
  const std::size_t n = state.params.size();
  if (gradient.size() != n) throw GrpoError("gradient length does not match params");
  if (state.adam_m.size() != n || state.adam_v.size() != n) throw GrpoError("optimizer moments do not match params");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(gradient[i])) throw GrpoError("non-finite gradient at index " + std::to_string(i));

  const auto t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  std::vector<double> params(n), m(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gradient[i];
    m[i] = cfg.adam_beta1 * state.adam_m[i] + (1.0 - cfg.adam_beta1) * g;
    v[i] = cfg.adam_beta2 * state.adam_v[i] + (1.0 - cfg.adam_beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = state.params[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    if (!std::isfinite(params[i]) || !std::isfinite(v[i])) {
      throw GrpoError("update would make parameter " + std::to_string(i) + " non-finite");
    }
  }
  state.params = std::move(params);
  state.adam_m = std::move(m);
  state.adam_v = std::move(v);
  ++state.step;
}

PolicyState adam_stepped(PolicyState state, std::span<const double> gradient, const GrpoConfig& cfg) {
  adam_step(state, gradient, cfg);
  return state;
}

SurrogateBatch build_batch(std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  SurrogateBatch batch;
  batch.clip = cfg.clip();
  for (const auto& g : groups) {
    g.validate();
    if (g.samples.empty()) continue;
    SurrogateGroup sg;
    sg.prompt_tokens = g.samples.front().prompt_tokens;
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& s = g.samples[i];
      if (s.prompt_tokens != sg.prompt_tokens) throw GrpoError("samples in a group must share one prompt");
      sg.completions.push_back({s.completion_tokens, s.token_logprobs, g.advantages[i]});
    }
    batch.groups.push_back(std::move(sg));
  }
  return batch;
}

UpdateStats policy_gradient_step(PolicyState& state, std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                                 Execution execution) {
  cfg.validate();
  const auto batch = build_batch(groups, cfg);
  const auto lg = loss_and_gradient(state, batch, execution);
  adam_step(state, lg.gradient, cfg);
  return {lg.loss, lg.tokens};
}

}  // namespace sapo::grpo
