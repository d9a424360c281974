#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace sapo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a parent seed and a list of labels.
/// Stable across platforms; the same inputs always give the same seed.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> labels);

/// FNV-1a, for folding string ids (node names) into seeds.
std::uint64_t hash_string(std::string_view s);

// The standard distributions are implementation-defined, so instance
// generation would not be reproducible across standard libraries. These
// helpers are fully specified.

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// Uniform integer in [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

/// Uniform real in [0, 1) with 53 bits of randomness.
double uniform_unit(Rng& rng);

/// k distinct indices from [0, n), returned in ascending order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace sapo
