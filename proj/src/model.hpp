#pragma once

// Forward/backward engine shared by sampling, scoring and the surrogate
// gradient. Not part of the public interface.

#include <span>
#include <vector>

#include "sapo/policy.hpp"

namespace sapo::detail {

class Net {
 public:
  explicit Net(const PolicyState& state);

  const Architecture& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  int vocab() const { return Vocab::kSize; }
  int hidden() const { return arch_.hidden; }
  int layers() const { return arch_.layers; }
  int embedding() const { return arch_.embedding; }
  const double* at(std::size_t offset) const { return params_ + offset; }

 private:
  Architecture arch_;
  ParamLayout layout_;
  const double* params_;
};

/// Activations of one time step for a batch of columns.
class StepCache {
 public:
  void reset(const Net& net, int batch, bool readout);

  int batch() const { return batch_; }
  bool has_readout() const { return readout_; }

  std::vector<Token> input;
  // Per layer, column-major (rows x batch).
  double* x(int l) { return buf_.data() + off_[l].x; }            // layer 0 only
  double* hprev(int l) { return buf_.data() + off_[l].hprev; }
  double* r(int l) { return buf_.data() + off_[l].r; }
  double* z(int l) { return buf_.data() + off_[l].z; }
  double* n(int l) { return buf_.data() + off_[l].n; }
  double* ghn(int l) { return buf_.data() + off_[l].ghn; }
  double* h(int l) { return buf_.data() + off_[l].h; }
  const double* x(int l) const { return buf_.data() + off_[l].x; }
  const double* hprev(int l) const { return buf_.data() + off_[l].hprev; }
  const double* r(int l) const { return buf_.data() + off_[l].r; }
  const double* z(int l) const { return buf_.data() + off_[l].z; }
  const double* n(int l) const { return buf_.data() + off_[l].n; }
  const double* ghn(int l) const { return buf_.data() + off_[l].ghn; }
  const double* h(int l) const { return buf_.data() + off_[l].h; }
  std::vector<double> logp;  // vocab x batch, empty without readout

 private:
  struct Offsets {
    std::size_t x, hprev, r, z, n, ghn, h;
  };
  int batch_ = 0;
  bool readout_ = false;
  std::vector<Offsets> off_;
  std::vector<double> buf_;
};

struct Scratch {
  std::vector<double> gx, gh, dgx, dgh, dh, dx, dlogits;
  std::vector<std::vector<double>> carry;
};

/// Runs one step. hprev[l] points at a (hidden x batch) block for layer l.
void forward_step(const Net& net, std::span<const Token> input, std::span<const double* const> hprev,
                  bool readout, StepCache& cache, Scratch& scratch);

/// Backpropagates one step. `dlogits` is (vocab x batch) or null.
/// carry[l] holds dL/dh(l) for this step on entry and dL/dhprev(l) on exit.
void backward_step(const Net& net, const StepCache& cache, const double* dlogits,
                   std::vector<std::vector<double>>& carry, double* grad, Scratch& scratch);

/// Forward activations for one prompt with several completions.
struct GroupTrace {
  std::vector<StepCache> prompt_steps;
  std::vector<StepCache> completion_steps;
  std::vector<int> order;                     // column -> completion index
  std::vector<std::vector<double>> logprobs;  // by completion index
};

/// Throws PolicyError on bad token ids, empty completions or context overflow.
GroupTrace forward_group(const Net& net, std::span<const Token> prompt,
                         std::span<const std::vector<Token>> completions, Scratch& scratch);

/// weights[i][t] = dL/dlogp of completion i, token t. Accumulates into grad.
void backward_group(const Net& net, const GroupTrace& trace, std::span<const std::vector<Token>> completions,
                    const std::vector<std::vector<double>>& weights, double* grad, Scratch& scratch);

/// Runs the prompt alone; returns the per-layer final hidden states and the
/// next-token log-distribution.
struct PromptState {
  std::vector<std::vector<double>> h;  // per layer, hidden
  std::vector<double> logp;            // vocab
};
PromptState run_prompt(const Net& net, std::span<const Token> prompt, Scratch& scratch);

void check_tokens(std::span<const Token> tokens, const char* what);

}  // namespace sapo::detail
