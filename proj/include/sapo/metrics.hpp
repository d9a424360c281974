#pragma once

// Per-round reward table, smoothing, and the derived curves used to compare
// swarm configurations.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sapo::metrics {

/// Trailing moving average; the first window-1 outputs average the available
/// prefix. Throws std::invalid_argument when window is 0.
std::vector<double> smooth(std::span<const double> series, std::size_t window = 100);

/// Population variance of first differences. Zero for fewer than 3 points.
double oscillation(std::span<const double> curve);

struct Row {
  std::string config;  // "I/J"
  std::uint64_t seed = 0;
  int node = 0;
  std::uint64_t round = 0;
  double mean_reward = 0.0;

  friend bool operator==(const Row&, const Row&) = default;
};

struct Envelope {
  std::vector<double> mean, min, max;
};

class MetricsTable {
 public:
  void add(Row row) { rows_.push_back(std::move(row)); }
  const std::vector<Row>& rows() const { return rows_; }

  /// Distinct configs in first-appearance order.
  std::vector<std::string> configs() const;
  /// Distinct seeds of a config in first-appearance order.
  std::vector<std::uint64_t> seeds(const std::string& config) const;
  /// series[node][round]. Throws std::invalid_argument if a node is missing
  /// rounds or nodes disagree on length.
  std::vector<std::vector<double>> node_series(const std::string& config, std::uint64_t seed) const;
  /// Rounds per node for a (config, seed).
  std::size_t rounds(const std::string& config, std::uint64_t seed) const;

  /// Sum over agents and rounds of per-round mean rewards.
  double cumulative_total(const std::string& config, std::uint64_t seed) const;

  /// Each agent's series smoothed, then mean/min/max across agents per round.
  Envelope agent_envelope(const std::string& config, std::uint64_t seed, std::size_t window = 100) const;

  /// config,seed,node,round,mean_reward with a header line. Rewards are
  /// written with 17 significant digits so reading back is exact.
  void write_raw_csv(const std::filesystem::path& path) const;
  static MetricsTable read_raw_csv(const std::filesystem::path& path);

  /// config,seed,round,mean,min,max.
  void write_smoothed_csv(const std::filesystem::path& path, std::size_t window = 100) const;

 private:
  std::vector<Row> rows_;
};

}  // namespace sapo::metrics
