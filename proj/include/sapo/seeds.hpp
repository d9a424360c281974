#pragma once

// Seed streams used by a training loop. Every random choice in a round is
// drawn from a stream derived from (node seed, round, purpose[, index]), so a
// round can be replayed without replaying the rounds before it.

#include <cstdint>

#include "sapo/rng.hpp"

namespace sapo::seeds {

enum Purpose : std::uint64_t {
  kSpecialtyPick = 0x5350,
  kInstance = 0x494e,
  kRollout = 0x524f,
  kShare = 0x5348,
  kAssemble = 0x4153,
};

inline std::uint64_t specialty_pick(std::uint64_t node_seed, std::uint64_t round) {
  return derive_seed(node_seed, {round, kSpecialtyPick});
}

inline std::uint64_t instance(std::uint64_t node_seed, std::uint64_t round, std::uint64_t index) {
  return derive_seed(node_seed, {round, kInstance, index});
}

inline std::uint64_t rollout(std::uint64_t node_seed, std::uint64_t round, std::uint64_t index) {
  return derive_seed(node_seed, {round, kRollout, index});
}

inline std::uint64_t share(std::uint64_t node_seed, std::uint64_t round) {
  return derive_seed(node_seed, {round, kShare});
}

inline std::uint64_t assemble(std::uint64_t node_seed, std::uint64_t round) {
  return derive_seed(node_seed, {round, kAssemble});
}

}  // namespace sapo::seeds
