#pragma once

// An evaluator independent of training: on request it draws a fresh question
// from its own seed stream, asks the node for exactly one answer, and scores
// the answer with its own verifier.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/taskgen.hpp"

namespace sapo::judge {

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalRecord {
  std::string node_id;
  std::uint64_t normalized_round = 0;
  taskgen::SpecialtyId specialty = taskgen::SpecialtyId::basic_arithmetic;
  std::uint64_t instance_seed = 0;
  std::optional<double> score;  // absent for a timeout entry
  std::uint64_t timestamp = 0;

  bool timed_out() const { return !score.has_value(); }
  std::string to_json_line() const;
  static EvalRecord from_json_line(std::string_view line);
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

/// A participant as the judge sees it.
class NodeHandle {
 public:
  virtual ~NodeHandle() = default;
  virtual std::string node_id() const = 0;
  /// Training rounds the node has completed.
  virtual std::uint64_t completed_rounds() const = 0;
  /// One answer to `prompt`, or nullopt if the node did not respond in time.
  virtual std::optional<std::string> answer(const std::string& prompt) = 0;
};

/// Greedy single completion from a policy the caller keeps alive.
class PolicyHandle final : public NodeHandle {
 public:
  PolicyHandle(std::string node_id, const PolicyState& state, const std::uint64_t& completed_rounds,
               int max_new_tokens = 160);
  std::string node_id() const override { return node_id_; }
  std::uint64_t completed_rounds() const override { return *rounds_; }
  std::optional<std::string> answer(const std::string& prompt) override;
  /// Completions requested so far.
  std::size_t requests() const { return requests_; }

 private:
  std::string node_id_;
  const PolicyState* state_;
  const std::uint64_t* rounds_;
  int max_new_tokens_;
  std::size_t requests_ = 0;
};

struct JudgeConfig {
  std::uint64_t seed = 0;
  std::vector<taskgen::Specialty> specialties;
};

class Judge {
 public:
  explicit Judge(JudgeConfig config);

  /// The question the judge will pose for (node, normalized round, index of
  /// the evaluation within that round).
  taskgen::Question question_for(const std::string& node_id, std::uint64_t normalized_round,
                                 std::uint64_t index) const;

  /// One pass@1 evaluation. Throws JudgeError if the node's normalized round
  /// went backwards.
  EvalRecord evaluate(NodeHandle& node);

  std::vector<EvalRecord> log() const;
  void write_log(const std::filesystem::path& path) const;

 private:
  struct NodeSlot {
    std::mutex busy;
    std::optional<std::uint64_t> last_round;
    std::uint64_t index_in_round = 0;
  };
  NodeSlot& slot(const std::string& node_id);

  JudgeConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<NodeSlot>> slots_;
  std::vector<EvalRecord> log_;
  std::atomic<std::uint64_t> clock_{0};
};

/// Running mean of scores for one node, ordered by normalized round (stable
/// within a round). Timeout entries are ignored.
std::vector<std::pair<std::uint64_t, double>> cumulative_curve(const std::vector<EvalRecord>& records,
                                                               const std::string& node_id);

std::vector<EvalRecord> read_log(const std::filesystem::path& path);

}  // namespace sapo::judge
