// Serial reference vs OpenMP surrogate gradient on a realistic round batch.

#include <benchmark/benchmark.h>

#include "sapo/policy.hpp"
#include "sapo/rng.hpp"
#include "sapo/taskgen.hpp"

namespace {

using namespace sapo;

SurrogateBatch make_batch(const PolicyState& state, int groups, int per_group, int max_tokens) {
  SurrogateBatch batch;
  for (int g = 0; g < groups; ++g) {
    const auto q = taskgen::generate(taskgen::Specialty(taskgen::SpecialtyId::basic_arithmetic), 100 + g);
    SamplingOptions opts;
    opts.count = per_group;
    opts.max_new_tokens = max_tokens;
    opts.seed = 7 + g;
    SurrogateGroup group;
    group.prompt_tokens = prompt_tokens_for(q.prompt);
    int i = 0;
    for (auto& s : sample_completions(state, q.prompt, opts)) {
      ScoredCompletion c;
      c.tokens = std::move(s.completion_tokens);
      c.old_logprobs = std::move(s.token_logprobs);
      c.advantage = (i++ % 2 == 0) ? 1.0 : -1.0;
      group.completions.push_back(std::move(c));
    }
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

void run(benchmark::State& st, Execution mode) {
  const Architecture arch{2, static_cast<int>(st.range(0)), 16, 512};
  const auto state = PolicyState::initialize(arch, 1);
  const auto batch = make_batch(state, 8, 8, 48);
  for (auto _ : st) {
    auto r = loss_and_gradient(state, batch, mode);
    benchmark::DoNotOptimize(r.gradient.data());
  }
  st.counters["tokens"] = static_cast<double>(batch.token_count());
}

void BM_LossGradSerial(benchmark::State& st) { run(st, Execution::serial); }
void BM_LossGradParallel(benchmark::State& st) { run(st, Execution::parallel); }

}  // namespace

BENCHMARK(BM_LossGradSerial)->Arg(32)->Arg(48)->Arg(128)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_LossGradParallel)->Arg(32)->Arg(48)->Arg(128)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
