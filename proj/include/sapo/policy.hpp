#pragma once

// A small character-level autoregressive policy: token embedding, a stack of
// GRU layers, and a softmax readout. All trainable weights live in one flat
// parameter vector so the optimizer and checkpointing stay layout-agnostic.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sapo/objective.hpp"
#include "sapo/vocab.hpp"

namespace sapo {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Architecture {
  int layers = 2;
  int hidden = 128;
  int embedding = 32;
  int context = 512;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Offsets of each weight block inside the flat parameter vector.
struct ParamLayout {
  struct Layer {
    std::size_t wx, wh, bx, bh;
    int in;
  };
  std::size_t embedding = 0;
  std::vector<Layer> layers;
  std::size_t wo = 0, bo = 0;
  std::size_t total = 0;

  explicit ParamLayout(const Architecture& arch);
};

struct PolicyState {
  Architecture arch;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t step = 0;

  /// Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases.
  static PolicyState initialize(const Architecture& arch, std::uint64_t seed);

  std::size_t num_params() const { return params.size(); }
  /// Throws PolicyError if sizes disagree with the architecture or params are non-finite.
  void validate() const;

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

struct Sample {
  std::vector<Token> prompt_tokens;      // BOS + prompt
  std::vector<Token> completion_tokens;  // ends with EOS unless truncated
  std::string completion_text;
  std::vector<double> token_logprobs;    // untempered, aligned with completion_tokens
};

struct SamplingOptions {
  int count = 8;
  double temperature = 1.0;
  int max_new_tokens = 160;
  std::uint64_t seed = 0;
  bool greedy = false;
};

/// BOS followed by the encoded prompt. Throws on unencodable text.
std::vector<Token> prompt_tokens_for(std::string_view prompt);

/// Ancestral sampling of `count` completions. Deterministic in (state, prompt, options).
/// Throws PolicyError when the prompt does not fit in the context window.
std::vector<Sample> sample_completions(const PolicyState& state, std::string_view prompt,
                                       const SamplingOptions& options);

/// Exact per-token log-probabilities of `completion` given `prompt_tokens`.
std::vector<double> score_tokens(const PolicyState& state, std::span<const Token> prompt_tokens,
                                 std::span<const Token> completion);

/// Scores several completions sharing one prompt.
std::vector<std::vector<double>> score_group(const PolicyState& state, std::span<const Token> prompt_tokens,
                                             std::span<const std::vector<Token>> completions);

/// Full next-token log-distribution after each prefix; row t conditions on
/// prompt + completion[0..t). Used by tests to check normalization.
std::vector<std::vector<double>> next_token_logprobs(const PolicyState& state,
                                                     std::span<const Token> prompt_tokens,
                                                     std::span<const Token> completion);

// ---- surrogate loss ------------------------------------------------------

struct ScoredCompletion {
  std::vector<Token> tokens;
  /// Behaviour-policy log-probs. Empty means on-policy (ratio fixed at 1).
  std::vector<double> old_logprobs;
  double advantage = 0.0;
};

struct SurrogateGroup {
  std::vector<Token> prompt_tokens;
  std::vector<ScoredCompletion> completions;
};

struct SurrogateBatch {
  std::vector<SurrogateGroup> groups;
  ClipRange clip;

  std::size_t token_count() const;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
  std::size_t tokens = 0;
};

enum class Execution { serial, parallel };

/// Token-mean clipped surrogate over the whole batch and its exact gradient.
/// `parallel` spreads groups over OpenMP threads; both modes return
/// bit-identical results. Throws PolicyError on an empty batch or a
/// non-finite loss.
LossAndGradient loss_and_gradient(const PolicyState& state, const SurrogateBatch& batch,
                                  Execution execution = Execution::parallel);

/// Loss only; shares the forward path with loss_and_gradient.
double surrogate_loss_value(const PolicyState& state, const SurrogateBatch& batch);

// ---- checkpoints ---------------------------------------------------------

/// Versioned little-endian binary: magic, version, architecture, step,
/// params, first and second moments.
void save_checkpoint(const PolicyState& state, const std::filesystem::path& path);
PolicyState load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const PolicyState& state);
PolicyState decode_checkpoint(std::string_view bytes);

}  // namespace sapo
