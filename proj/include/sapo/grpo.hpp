#pragma once

// Group-relative advantages and the clipped policy-gradient update.

#include <span>
#include <string>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/taskgen.hpp"

namespace sapo::grpo {

class GrpoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrpoConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;
  double kl_weight = 0.0;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double std_floor = 1e-4;

  /// Throws GrpoError on out-of-range values. Only kl_weight == 0 is supported.
  void validate() const;
  ClipRange clip() const { return {eps_low, eps_high}; }

  friend bool operator==(const GrpoConfig&, const GrpoConfig&) = default;
};

struct Origin {
  bool external = false;
  std::string sender;  // empty for local groups

  static Origin local() { return {}; }
  static Origin from(std::string sender) { return {true, std::move(sender)}; }
};

struct RolloutGroup {
  taskgen::Question question;
  std::vector<Sample> samples;
  std::vector<double> rewards;
  std::vector<double> advantages;
  Origin origin;

  /// Checks the length and reward-range invariants.
  void validate() const;
};

/// (r_i - mean) / (population std + std_floor); all-equal rewards give exact
/// zeros. Throws GrpoError when fewer than two rewards are given.
std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor);

bool is_zero_advantage(const RolloutGroup& group);

/// Token-mean of the negated clipped surrogate. Throws on length mismatch,
/// non-positive or non-finite ratios.
double surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                      const GrpoConfig& cfg);

/// Adam with bias correction. Strong guarantee: on a non-finite gradient, a
/// length mismatch, or an update that would leave params non-finite, throws
/// and leaves `state` untouched.
void adam_step(PolicyState& state, std::span<const double> gradient, const GrpoConfig& cfg);

/// Value-returning form.
PolicyState adam_stepped(PolicyState state, std::span<const double> gradient, const GrpoConfig& cfg);

/// Surrogate inputs for a set of scored groups: every completion carries its
/// group advantage on every token and its recorded log-probs as old log-probs.
SurrogateBatch build_batch(std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

struct UpdateStats {
  double loss = 0.0;
  std::size_t tokens = 0;
};

/// One optimizer step on the whole training set.
UpdateStats policy_gradient_step(PolicyState& state, std::span<const RolloutGroup> groups,
                                 const GrpoConfig& cfg, Execution execution = Execution::parallel);

}  // namespace sapo::grpo
