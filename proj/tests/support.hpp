#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/rng.hpp"
#include "sapo/socket_transport.hpp"
#include "sapo/swarmnet.hpp"
#include "sapo/taskgen.hpp"
#include "sapo/warmstart.hpp"

namespace sapo::testing {

// (r - mean) / (std + floor) written out longhand with a two-pass mean.
inline std::vector<double> advantage_oracle(const std::vector<double>& r, double floor) {
  long double sum = 0;
  for (double x : r) sum += x;
  const long double mean = sum / r.size();
  long double ss = 0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const long double sd = std::sqrt(ss / r.size());
  std::vector<double> out;
  for (double x : r) out.push_back(static_cast<double>((x - mean) / (sd + floor)));
  return out;
}

// Random token sequences with behaviour log-probs near the current policy
// (ratios inside the unclipped band) and a few far outside it (clipped).
inline SurrogateBatch random_batch(const PolicyState& state, Rng& rng, int groups = 3, int per_group = 4) {
  SurrogateBatch batch;
  for (int g = 0; g < groups; ++g) {
    SurrogateGroup group;
    group.prompt_tokens = prompt_tokens_for("Calculate: " + std::to_string(uniform_below(rng, 100)));
    for (int c = 0; c < per_group; ++c) {
      ScoredCompletion sc;
      const auto len = 1 + uniform_below(rng, 6);
      for (std::uint64_t t = 0; t < len; ++t)
        sc.tokens.push_back(static_cast<Token>(Vocab::kEos + uniform_below(rng, Vocab::kSize - Vocab::kEos)));
      for (double lp : score_tokens(state, group.prompt_tokens, sc.tokens)) {
        const double shift = uniform_below(rng, 5) == 0 ? (uniform_unit(rng) < 0.5 ? -0.7 : 0.7)
                                                        : 0.3 * (uniform_unit(rng) - 0.5);
        sc.old_logprobs.push_back(lp + shift);
      }
      sc.advantage = 2.0 * uniform_unit(rng) - 1.0;
      group.completions.push_back(std::move(sc));
    }
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

// Central differences of the loss on random coordinates. Relative error uses
// max(|analytic|, |numeric|, 1e-6) as the denominator.
inline GradCheck gradient_check(const PolicyState& state, const SurrogateBatch& batch, Rng& rng, int coords,
                                double h = 1e-5) {
  const auto analytic = loss_and_gradient(state, batch, Execution::serial).gradient;
  GradCheck out;
  for (int k = 0; k < coords; ++k) {
    const auto i = uniform_below(rng, state.params.size());
    auto plus = state;
    auto minus = state;
    plus.params[i] += h;
    minus.params[i] -= h;
    const double numeric = (surrogate_loss_value(plus, batch) - surrogate_loss_value(minus, batch)) / (2 * h);
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::fabs(numeric - analytic[i]) / denom);
    ++out.coordinates;
  }
  return out;
}

inline std::string random_text(Rng& rng, std::size_t max_len) {
  static const std::string kAlphabet =
      "abcdefghijklmnopqrstuvwxyz0123456789 <>/+-*.\n\"\\{}\t\xc3\xa9\xe2\x82\xac";
  std::string s;
  const auto len = uniform_below(rng, max_len + 1);
  while (s.size() < len) {
    const auto k = uniform_below(rng, kAlphabet.size() + 2);
    if (k < kAlphabet.size() - 5) s += kAlphabet[k];
    else if (k % 2 == 0) s += "\xc3\xa9";
    else s += "\xe2\x82\xac";
  }
  return s;
}

inline swarm::RolloutPacket random_packet(Rng& rng) {
  swarm::RolloutPacket p;
  p.sender = "node-" + std::to_string(uniform_below(rng, 16));
  p.round = rng();
  const auto id = taskgen::kAllSpecialties[uniform_below(rng, taskgen::kAllSpecialties.size())];
  p.specialty = std::string(taskgen::to_string(id));
  p.instance_seed = rng();
  p.prompt = random_text(rng, 200);
  p.ground_truth = random_text(rng, 20);
  p.metadata = taskgen::verifier_id_for(id);
  const auto n = 1 + uniform_below(rng, 8);
  for (std::uint64_t i = 0; i < n; ++i) p.completions.push_back(random_text(rng, 160));
  return p;
}

// A small policy with a short supervised prior, so rewards are mixed.
inline PolicyState small_base(const std::vector<taskgen::Specialty>& specialties) {
  WarmstartConfig w;
  w.specialties = specialties;
  w.steps = 600;
  w.questions_per_step = 16;
  w.truth_fraction = 1.0;
  w.seed = 1;
  return warmstart(PolicyState::initialize({1, 16, 8, 128}, 1), w);
}

struct ConstructedPool {
  std::vector<swarm::RolloutPacket> packets;
  std::size_t informative = 0;  // packets whose rewards are not all equal
};

// Packets over easy arithmetic whose completions are all right, all wrong,
// or a mix. `informative` < 0 picks each kind at random.
inline ConstructedPool constructed_pool(Rng& rng, std::size_t n, long informative = -1) {
  ConstructedPool out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = taskgen::generate(taskgen::Specialty(taskgen::SpecialtyId::basic_arithmetic, 2), rng());
    const auto right = taskgen::wrap_answer(q.ground_truth);
    const auto wrong = taskgen::wrap_answer(taskgen::corrupt_final_digit(q.ground_truth));
    const int kind = informative < 0 ? static_cast<int>(uniform_below(rng, 3))
                                     : (static_cast<long>(i) < informative ? 2 : static_cast<int>(i % 2));
    swarm::RolloutPacket p;
    p.sender = "peer-" + std::to_string(i % 3);
    p.round = 0;
    p.specialty = std::string(q.specialty.name());
    p.instance_seed = q.instance_seed;
    p.prompt = q.prompt;
    p.ground_truth = q.ground_truth;
    p.metadata = q.metadata.verifier_id;
    for (int k = 0; k < 8; ++k) {
      const bool correct = kind == 0 || (kind == 2 && uniform_below(rng, 2) == 0);
      p.completions.push_back(correct ? right : wrong);
    }
    if (kind == 2) {
      p.completions[0] = right;
      p.completions[7] = wrong;
      ++out.informative;
    }
    out.packets.push_back(std::move(p));
  }
  return out;
}

// A fixed schedule of broadcasts and polls over four nodes. Returns every poll
// result in order, so two transports can be compared event by event.
inline std::vector<std::vector<swarm::RolloutPacket>> run_schedule(bool sockets, int events = 200,
                                                                   std::uint64_t seed = 77) {
  const std::vector<std::string> ids{"node-0", "node-1", "node-2", "node-3"};
  std::vector<std::shared_ptr<swarm::SwarmPool>> pools;
  for (std::size_t i = 0; i < ids.size(); ++i) pools.push_back(std::make_shared<swarm::SwarmPool>(2, 5));
  swarm::InMemoryTransport memory;
  std::vector<std::unique_ptr<swarm::SocketEndpoint>> endpoints;
  if (sockets) {
    std::vector<swarm::PeerAddress> peers;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      endpoints.push_back(std::make_unique<swarm::SocketEndpoint>(ids[i], pools[i]));
      peers.push_back({ids[i], "127.0.0.1", endpoints.back()->port()});
    }
    for (auto& e : endpoints) e->set_peers(peers);
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) memory.attach(ids[i], pools[i]);
  }
  Rng rng(seed);
  std::vector<std::uint64_t> round(ids.size(), 0);
  std::vector<std::vector<swarm::RolloutPacket>> polls;
  for (int e = 0; e < events; ++e) {
    const auto n = uniform_below(rng, ids.size());
    if (uniform_below(rng, 3) == 0) {
      polls.push_back(pools[n]->poll(ids[n], round[n]));
      continue;
    }
    if (uniform_below(rng, 4) == 0) ++round[n];
    std::vector<swarm::RolloutPacket> batch;
    const auto count = 1 + uniform_below(rng, 3);
    for (std::uint64_t k = 0; k < count; ++k) {
      auto p = random_packet(rng);
      p.sender = ids[n];
      p.round = round[n];
      batch.push_back(std::move(p));
    }
    swarm::Transport& t = sockets ? static_cast<swarm::Transport&>(*endpoints[n]) : memory;
    t.broadcast(ids[n], batch);
  }
  for (std::size_t n = 0; n < ids.size(); ++n) polls.push_back(pools[n]->poll(ids[n], round[n]));
  for (auto& e : endpoints) e->stop();
  return polls;
}

}  // namespace sapo::testing
