#include "sapo/warmstart.hpp"

#include <algorithm>

#include "sapo/grpo.hpp"
#include "sapo/rng.hpp"

namespace sapo {

std::string answer_completion(const taskgen::Question& question) { return taskgen::wrap_answer(question.ground_truth); }

PolicyState warmstart(PolicyState state, const WarmstartConfig& config) {
  if (config.specialties.empty()) throw std::invalid_argument("warm start needs at least one specialty");
  if (config.questions_per_step < 1 || config.steps < 0) throw std::invalid_argument("bad warm start schedule");
  if (!(config.truth_fraction >= 0.0 && config.truth_fraction <= 1.0)) {
    throw std::invalid_argument("truth_fraction must lie in [0, 1]");
  }
  grpo::GrpoConfig opt;
  opt.learning_rate = config.learning_rate;

  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(step), 0x5741}));
    SurrogateBatch batch;
    batch.clip = opt.clip();
    for (int q = 0; q < config.questions_per_step; ++q) {
      const auto& spec = config.specialties[uniform_below(rng, config.specialties.size())];
      const auto question = taskgen::generate(spec, rng());
      const auto decoy = taskgen::generate(spec, rng());
      const bool truthful = uniform_unit(rng) < config.truth_fraction;
      auto tokens = Vocab::encode(answer_completion(truthful ? question : decoy));
      tokens.push_back(Vocab::kEos);
      SurrogateGroup g;
      g.prompt_tokens = prompt_tokens_for(question.prompt);
      g.completions.push_back({std::move(tokens), {}, 1.0});
      batch.groups.push_back(std::move(g));
    }
    // With ratio fixed at 1 and advantage 1 the surrogate gradient is the
    // token-mean negative log-likelihood gradient.
    const auto lg = loss_and_gradient(state, batch, Execution::parallel);
    grpo::adam_step(state, lg.gradient, opt);
  }
  std::fill(state.adam_m.begin(), state.adam_m.end(), 0.0);
  std::fill(state.adam_v.begin(), state.adam_v.end(), 0.0);
  state.step = 0;
  return state;
}

}  // namespace sapo
