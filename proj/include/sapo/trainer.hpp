#pragma once

// Plain single-policy GRPO fine-tuning with no swarm: sample a batch, roll
// out, score, update on every group. Uses the same seed streams as a node so
// the two can be compared step for step.

#include <cstdint>
#include <vector>

#include "sapo/grpo.hpp"
#include "sapo/policy.hpp"
#include "sapo/taskgen.hpp"

namespace sapo {

struct TrainerConfig {
  std::vector<taskgen::Specialty> specialties;
  int batch_size = 8;
  int completions_per_question = 8;
  grpo::GrpoConfig grpo;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int max_new_tokens = 160;
};

struct TrainerStep {
  double mean_reward = 0.0;
  double loss = 0.0;
};

class StandaloneTrainer {
 public:
  StandaloneTrainer(TrainerConfig config, PolicyState initial);

  TrainerStep step(std::uint64_t round);
  const PolicyState& state() const { return state_; }

 private:
  TrainerConfig config_;
  PolicyState state_;
};

}  // namespace sapo
