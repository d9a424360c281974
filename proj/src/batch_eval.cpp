#include <cmath>
#include <sstream>

#include <omp.h>

#include "model.hpp"

namespace sapo {

std::size_t SurrogateBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& g : groups)
    for (const auto& c : g.completions) n += c.tokens.size();
  return n;
}

namespace {

struct GroupResult {
  double loss_sum = 0.0;
  std::vector<double> gradient;  // empty when the group contributes nothing
};

bool all_zero_advantage(const SurrogateGroup& g) {
  for (const auto& c : g.completions)
    if (c.advantage != 0.0) return false;
  return true;
}

std::vector<std::vector<Token>> token_lists(const SurrogateGroup& g) {
  std::vector<std::vector<Token>> out;
  out.reserve(g.completions.size());
  for (const auto& c : g.completions) out.push_back(c.tokens);
  return out;
}

[[noreturn]] void non_finite(std::size_t group, std::size_t completion, std::size_t token, double ratio,
                             double advantage) {
  std::ostringstream os;
  os << "non-finite surrogate loss at group " << group << ", completion " << completion << ", token " << token
     << " (ratio " << ratio << ", advantage " << advantage << ")";
  throw PolicyError(os.str());
}

// Evaluates one group. With want_grad, also returns its gradient scaled by
// 1/total_tokens.
GroupResult evaluate_group(const detail::Net& net, const SurrogateBatch& batch, std::size_t gi,
                           double inv_tokens, bool want_grad, std::size_t num_params) {
  GroupResult result;
  const auto& group = batch.groups[gi];
  if (group.completions.empty() || all_zero_advantage(group)) return result;

  const auto completions = token_lists(group);
  detail::Scratch scratch;
  const auto trace = detail::forward_group(net, group.prompt_tokens, completions, scratch);

  std::vector<std::vector<double>> weights(completions.size());
  for (std::size_t i = 0; i < completions.size(); ++i) {
    const auto& c = group.completions[i];
    if (!c.old_logprobs.empty() && c.old_logprobs.size() != c.tokens.size()) {
      throw PolicyError("old_logprobs length does not match completion length");
    }
    if (!std::isfinite(c.advantage)) non_finite(gi, i, 0, 1.0, c.advantage);
    weights[i].resize(c.tokens.size());
    for (std::size_t t = 0; t < c.tokens.size(); ++t) {
      const double lp = trace.logprobs[i][t];
      const double ratio = c.old_logprobs.empty() ? 1.0 : std::exp(lp - c.old_logprobs[t]);
      const double term = clipped_token_loss(ratio, c.advantage, batch.clip);
      if (!std::isfinite(term) || !std::isfinite(lp)) non_finite(gi, i, t, ratio, c.advantage);
      result.loss_sum += term;
      weights[i][t] = clipped_token_loss_dlogp(ratio, c.advantage, batch.clip) * inv_tokens;
    }
  }
  if (want_grad) {
    result.gradient.assign(num_params, 0.0);
    detail::backward_group(net, trace, completions, weights, result.gradient.data(), scratch);
  }
  return result;
}

}  // namespace

LossAndGradient loss_and_gradient(const PolicyState& state, const SurrogateBatch& batch, Execution execution) {
  const auto tokens = batch.token_count();
  if (tokens == 0) throw PolicyError("surrogate batch has no tokens");
  const detail::Net net(state);
  const double inv_tokens = 1.0 / static_cast<double>(tokens);
  const std::size_t G = batch.groups.size();
  std::vector<GroupResult> results(G);

  if (execution == Execution::parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(G); ++g) {
      try {
        results[g] = evaluate_group(net, batch, g, inv_tokens, true, state.params.size());
      } catch (...) {
#pragma omp critical(sapo_loss_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t g = 0; g < G; ++g) results[g] = evaluate_group(net, batch, g, inv_tokens, true, state.params.size());
  }

  // Fixed-order reduction keeps both modes bit-identical.
  LossAndGradient out;
  out.tokens = tokens;
  out.gradient.assign(state.params.size(), 0.0);
  double loss_sum = 0.0;
  for (const auto& r : results) {
    loss_sum += r.loss_sum;
    if (r.gradient.empty()) continue;
    for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += r.gradient[i];
  }
  out.loss = loss_sum * inv_tokens;
  if (!std::isfinite(out.loss)) throw PolicyError("non-finite surrogate loss over batch");
  return out;
}

double surrogate_loss_value(const PolicyState& state, const SurrogateBatch& batch) {
  const auto tokens = batch.token_count();
  if (tokens == 0) throw PolicyError("surrogate batch has no tokens");
  const detail::Net net(state);
  const double inv_tokens = 1.0 / static_cast<double>(tokens);
  double loss_sum = 0.0;
  for (std::size_t g = 0; g < batch.groups.size(); ++g)
    loss_sum += evaluate_group(net, batch, g, inv_tokens, false, state.params.size()).loss_sum;
  return loss_sum * inv_tokens;
}

}  // namespace sapo
