#pragma once

// Multi-node sweeps over local/external splits and the comparison report.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sapo/grpo.hpp"
#include "sapo/metrics.hpp"
#include "sapo/node.hpp"
#include "sapo/policy.hpp"
#include "sapo/stats.hpp"
#include "sapo/taskgen.hpp"
#include "sapo/warmstart.hpp"

namespace sapo::experiment {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TransportKind { inmemory, socket };

// phased: every node generates and shares round t, then every node trains on
// round t. Reproducible bit for bit. free: one thread per node, no
// coordination at all; results depend on thread timing.
enum class Scheduler { phased, free };

struct Split {
  int local = 8;
  int external = 0;
  std::string name() const { return std::to_string(local) + "/" + std::to_string(external); }
  friend bool operator==(const Split&, const Split&) = default;
};

struct ExperimentConfig {
  int num_nodes = 8;
  std::uint64_t rounds = 300;
  std::vector<Split> splits{{8, 0}, {6, 2}, {4, 4}, {2, 6}};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TransportKind transport = TransportKind::inmemory;
  Scheduler scheduler = Scheduler::phased;
  std::vector<taskgen::Specialty> specialties;  // empty means all five
  std::filesystem::path output_dir = "runs";

  // Per-node settings shared by every node.
  int batch_size = 8;
  int completions_per_question = 8;
  double share_fraction = 1.0;
  double temperature = 1.0;
  int max_new_tokens = 160;
  grpo::GrpoConfig grpo;

  std::uint64_t staleness_window = 2;
  std::size_t capacity_per_sender = 64;

  Architecture arch{2, 48, 16, 512};
  std::uint64_t init_seed = 0;
  int warmstart_steps = 0;
  int warmstart_questions = 16;
  double warmstart_learning_rate = 0.003;
  double warmstart_truth_fraction = 1.0;

  bool judge = false;
  std::uint64_t judge_seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::vector<taskgen::Specialty> active_specialties() const;
};

/// Reads the JSON config format (comments allowed). Unknown keys are errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::string_view text);
/// A fully commented config with every field at its default.
std::string config_template();

/// Node settings for node `index` of a run.
node::NodeConfig node_config(const ExperimentConfig& config, const Split& split, std::uint64_t seed, int index);

/// The shared starting policy: initialization plus the supervised prior.
/// Identical for every run of a config.
PolicyState base_policy(const ExperimentConfig& config);

struct NodeOutcome {
  std::string node_id;
  std::vector<node::RoundReport> reports;
  bool crashed = false;
  std::string error;
};

struct RunOutcome {
  Split split;
  std::uint64_t seed = 0;
  std::vector<NodeOutcome> nodes;
  bool complete() const;
};

/// Test seam: called at the start of each node round; throwing crashes the node.
using FaultInjector = std::function<void(const std::string& node_id, std::uint64_t round)>;

struct RunOptions {
  FaultInjector fault;
  /// Receives progress lines.
  std::function<void(const std::string&)> log;
  /// Write per-run directories under output_dir.
  bool write_files = true;
};

/// One swarm of num_nodes nodes for one split and seed.
RunOutcome run_swarm(const ExperimentConfig& config, const Split& split, std::uint64_t seed,
                     const PolicyState& base, const RunOptions& options = {});

struct SweepResult {
  metrics::MetricsTable table;
  std::vector<RunOutcome> runs;
  bool complete() const;
};

/// Every split x seed. Writes raw.csv, smoothed.csv, summary.json and, when
/// there are enough configurations and seeds, comparison.json.
SweepResult run_sweep(const ExperimentConfig& config, const RunOptions& options = {});

struct ConfigSummary {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<double> totals;        // cumulative total per seed
  double mean_total = 0.0;
  double min_total = 0.0;
  double max_total = 0.0;
  std::optional<double> improvement;          // % over baseline, exact
  std::optional<long long> improvement_floor; // floored to an integer percent
  std::vector<double> oscillation;   // per seed, agent-averaged smoothed curve
  double mean_oscillation = 0.0;
};

struct PairComparison {
  std::string a, b;
  stats::WilcoxonResult test;  // on per-seed totals, a vs b
  double mean_improvement = 0.0;  // mean over seeds of per-seed % change of a over b
};

struct ComparisonReport {
  std::string baseline;
  std::size_t rounds = 0;
  std::vector<ConfigSummary> configs;
  std::vector<PairComparison> pairs;
  std::string to_json() const;
};

/// Percent change of `value` over `baseline`; nullopt when the baseline is 0.
std::optional<double> improvement_percent(double value, double baseline);

/// Requires >= 2 configurations with >= 3 shared seeds each and equal round
/// counts (throws std::invalid_argument naming the configs otherwise). The
/// baseline defaults to the config with no external samples, else the first.
ComparisonReport compare_configs(const metrics::MetricsTable& table, const std::string& baseline = "",
                                 std::size_t window = 100);

}  // namespace sapo::experiment
