#pragma once

// Supervised prior for a freshly initialized policy, standing in for a
// pretrained base model. A randomly initialized character model essentially
// never emits a well-formed answer span, so verifier rewards would be zero
// everywhere and every group degenerate.
//
// Targets are "<answer>X</answer>" followed by EOS. With probability
// truth_fraction, X is the question's own answer; otherwise it is the answer
// to a different, independently drawn instance of the same specialty. A zero
// truth_fraction teaches only the format and the answer marginal.

#include <cstdint>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/taskgen.hpp"

namespace sapo {

struct WarmstartConfig {
  std::vector<taskgen::Specialty> specialties;
  int steps = 200;
  int questions_per_step = 8;
  double learning_rate = 0.003;
  double truth_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// "<answer>ground truth</answer>" for a question.
std::string answer_completion(const taskgen::Question& question);

/// Runs the prior and returns a state with fresh optimizer moments and a zero
/// step counter.
PolicyState warmstart(PolicyState initial, const WarmstartConfig& config);

}  // namespace sapo
