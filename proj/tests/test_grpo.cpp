#include <cmath>

#include "doctest.h"
#include "sapo/grpo.hpp"
#include "sapo/objective.hpp"
#include "sapo/rng.hpp"
#include "support.hpp"

using namespace sapo;
using namespace sapo::grpo;

TEST_CASE("advantages match the longhand oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> r(8);
    for (auto& x : r) x = static_cast<double>(uniform_below(rng, 2));
    const auto got = compute_advantages(r, 1e-4);
    const auto want = testing::advantage_oracle(r, 1e-4);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("advantages on hand-worked groups") {
  // Three ones out of eight: mean 3/8, std sqrt(15)/8.
  const std::vector<double> r{1, 1, 1, 0, 0, 0, 0, 0};
  const auto a = compute_advantages(r, 1e-4);
  const double sd = std::sqrt(15.0) / 8.0;
  CHECK(a[0] == doctest::Approx((1 - 0.375) / (sd + 1e-4)).epsilon(1e-14));
  CHECK(a[7] == doctest::Approx(-0.375 / (sd + 1e-4)).epsilon(1e-14));
  double total = 0;
  for (double x : a) total += x;
  CHECK(std::fabs(total) < 1e-12);
}

TEST_CASE("equal rewards give exact zeros") {
  for (double v : {0.0, 1.0, 0.5}) {
    const std::vector<double> r(8, v);
    for (double x : compute_advantages(r, 1e-4)) CHECK(x == 0.0);
  }
  CHECK_THROWS_AS(compute_advantages(std::vector<double>{1.0}, 1e-4), GrpoError);
}

TEST_CASE("clipped token loss worked examples") {
  const ClipRange clip{0.2, 0.28};
  CHECK(clipped_token_loss(1.0, 2.0, clip) == -2.0);
  CHECK(clipped_token_loss(1.5, 1.0, clip) == doctest::Approx(-1.28));
  CHECK(clipped_token_loss(0.5, 1.0, clip) == doctest::Approx(-0.5));
  CHECK(clipped_token_loss(0.5, -1.0, clip) == doctest::Approx(0.8));
  CHECK(clipped_token_loss(1.5, -1.0, clip) == doctest::Approx(1.5));
  CHECK(clipped_token_loss_dlogp(1.5, 1.0, clip) == 0.0);
  CHECK(clipped_token_loss_dlogp(0.5, -1.0, clip) == 0.0);
  CHECK(clipped_token_loss_dlogp(1.1, 1.0, clip) == doctest::Approx(-1.1));
}

TEST_CASE("clip envelope property") {
  Rng rng(2);
  const ClipRange clip{0.2, 0.28};
  for (int i = 0; i < 5000; ++i) {
    const double ratio = std::exp(4.0 * uniform_unit(rng) - 2.0);
    const double adv = 6.0 * uniform_unit(rng) - 3.0;
    const double loss = clipped_token_loss(ratio, adv, clip);
    if (adv > 0) CHECK(-loss <= (1 + 0.28) * adv + 1e-12);
    if (ratio >= 0.8 && ratio <= 1.28) CHECK(unclipped_branch_active(ratio, adv, clip));
  }
}

TEST_CASE("surrogate_loss token mean") {
  GrpoConfig cfg;
  const std::vector<double> ratios{1.0, 1.0, 2.0};
  const std::vector<double> adv{1.0, -1.0, 1.0};
  CHECK(surrogate_loss(ratios, adv, cfg) == doctest::Approx((-1.0 + 1.0 - 1.28) / 3.0));
  CHECK_THROWS_AS(surrogate_loss(std::vector<double>{1.0}, adv, cfg), GrpoError);
  CHECK_THROWS_AS(surrogate_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, cfg), GrpoError);
}

TEST_CASE("config validation") {
  GrpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.kl_weight = 0.1;
  CHECK_THROWS_AS(cfg.validate(), GrpoError);
  cfg = {};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), GrpoError);
  cfg = {};
  cfg.eps_low = 1.5;
  CHECK_THROWS_AS(cfg.validate(), GrpoError);
}

TEST_CASE("adam matches a scalar oracle over several steps") {
  PolicyState s;
  s.arch = {1, 1, 1, 2};
  s.params = {0.5, -0.25};
  s.adam_m = {0, 0};
  s.adam_v = {0, 0};
  GrpoConfig cfg;
  std::vector<double> p = s.params, m(2, 0), v(2, 0);
  const std::vector<std::vector<double>> grads{{0.1, -2.0}, {0.3, 0.5}, {-0.2, 0.0}};
  for (std::size_t t = 0; t < grads.size(); ++t) {
    s = adam_stepped(s, grads[t], cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t][i] * grads[t][i];
      const double mh = m[i] / (1 - std::pow(0.9, t + 1));
      const double vh = v[i] / (1 - std::pow(0.999, t + 1));
      p[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(s.params[i] == doctest::Approx(p[i]).epsilon(1e-14));
    }
  }
  CHECK(s.step == 3);
  // The first step moves every coordinate with a nonzero gradient by ~lr.
  CHECK(std::fabs(p[0] - 0.5) < 3e-3);
}

TEST_CASE("adam leaves the state untouched on bad input") {
  PolicyState s;
  s.arch = {1, 1, 1, 2};
  s.params = {0.5, -0.25};
  s.adam_m = {0.1, 0.2};
  s.adam_v = {0.3, 0.4};
  s.step = 5;
  const auto before = s;
  GrpoConfig cfg;
  CHECK_THROWS_AS(adam_step(s, std::vector<double>{1.0, std::nan("")}, cfg), GrpoError);
  CHECK(s == before);
  CHECK_THROWS_AS(adam_step(s, std::vector<double>{1.0}, cfg), GrpoError);
  CHECK(s == before);
  CHECK_THROWS_AS(adam_step(s, std::vector<double>{1e308, 1.0}, cfg), GrpoError);
  CHECK(s == before);
}

TEST_CASE("build_batch carries advantages and old log-probs") {
  const auto state = PolicyState::initialize({1, 4, 4, 64}, 1);
  RolloutGroup g;
  g.question = taskgen::build::arithmetic("1 + 1");
  SamplingOptions opts;
  opts.count = 4;
  opts.max_new_tokens = 5;
  g.samples = sample_completions(state, g.question.prompt, opts);
  g.rewards = {1, 0, 0, 0};
  g.advantages = compute_advantages(g.rewards, 1e-4);
  const std::vector<RolloutGroup> groups{g};
  const auto batch = build_batch(groups, GrpoConfig{});
  REQUIRE(batch.groups.size() == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(batch.groups[0].completions[i].advantage == g.advantages[i]);
    CHECK(batch.groups[0].completions[i].old_logprobs == g.samples[i].token_logprobs);
  }
  CHECK_FALSE(is_zero_advantage(g));
  g.advantages.assign(4, 0.0);
  CHECK(is_zero_advantage(g));
}
