#include <algorithm>
#include <cmath>
#include <numeric>

#include "model.hpp"
#include "sapo/kernels.hpp"
#include "sapo/rng.hpp"

namespace sapo {

namespace k = kernels;

ParamLayout::ParamLayout(const Architecture& arch) {
  if (arch.layers < 1 || arch.hidden < 1 || arch.embedding < 1 || arch.context < 2) {
    throw PolicyError("architecture needs layers, hidden, embedding >= 1 and context >= 2");
  }
  const std::size_t V = Vocab::kSize, H = arch.hidden, E = arch.embedding;
  std::size_t at = 0;
  embedding = at;
  at += V * E;
  for (int l = 0; l < arch.layers; ++l) {
    Layer layer{};
    layer.in = l == 0 ? arch.embedding : arch.hidden;
    layer.wx = at;
    at += 3 * H * layer.in;
    layer.wh = at;
    at += 3 * H * H;
    layer.bx = at;
    at += 3 * H;
    layer.bh = at;
    at += 3 * H;
    layers.push_back(layer);
  }
  wo = at;
  at += V * H;
  bo = at;
  at += V;
  total = at;
}

PolicyState PolicyState::initialize(const Architecture& arch, std::uint64_t seed) {
  const ParamLayout layout(arch);
  PolicyState s;
  s.arch = arch;
  s.params.assign(layout.total, 0.0);
  s.adam_m.assign(layout.total, 0.0);
  s.adam_v.assign(layout.total, 0.0);
  Rng rng(derive_seed(seed, {0x1417}));
  const double scale = 1.0 / std::sqrt(static_cast<double>(arch.hidden));
  auto fill = [&](std::size_t begin, std::size_t count, double a) {
    for (std::size_t i = 0; i < count; ++i) s.params[begin + i] = a * (2.0 * uniform_unit(rng) - 1.0);
  };
  const std::size_t V = Vocab::kSize, H = arch.hidden;
  fill(layout.embedding, V * arch.embedding, 1.0);
  for (const auto& layer : layout.layers) {
    fill(layer.wx, 3 * H * layer.in, scale);
    fill(layer.wh, 3 * H * H, scale);
  }
  fill(layout.wo, V * H, scale);
  return s;
}

void PolicyState::validate() const {
  const ParamLayout layout(arch);
  if (params.size() != layout.total) {
    throw PolicyError("params length " + std::to_string(params.size()) + " != architecture size " +
                      std::to_string(layout.total));
  }
  if (adam_m.size() != params.size() || adam_v.size() != params.size()) {
    throw PolicyError("optimizer moments must match params length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) throw PolicyError("non-finite parameter at index " + std::to_string(i));
  }
}

namespace detail {

Net::Net(const PolicyState& state) : arch_(state.arch), layout_(state.arch), params_(state.params.data()) {
  if (state.params.size() != layout_.total) {
    throw PolicyError("params length does not match architecture");
  }
}

void StepCache::reset(const Net& net, int batch, bool readout) {
  batch_ = batch;
  readout_ = readout;
  const std::size_t H = net.hidden(), B = batch;
  off_.resize(net.layers());
  std::size_t at = 0;
  for (int l = 0; l < net.layers(); ++l) {
    auto& o = off_[l];
    o.x = at;
    if (l == 0) at += static_cast<std::size_t>(net.embedding()) * B;
    o.hprev = at;
    at += H * B;
    o.r = at;
    at += H * B;
    o.z = at;
    at += H * B;
    o.n = at;
    at += H * B;
    o.ghn = at;
    at += H * B;
    o.h = at;
    at += H * B;
  }
  buf_.assign(at, 0.0);
  if (readout) {
    logp.assign(static_cast<std::size_t>(net.vocab()) * B, 0.0);
  } else {
    logp.clear();
  }
}

namespace {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

void check_tokens(std::span<const Token> tokens, const char* what) {
  for (Token t : tokens) {
    if (t < 0 || t >= Vocab::kSize) {
      throw PolicyError(std::string(what) + " token id " + std::to_string(t) + " outside vocab [0, " +
                        std::to_string(Vocab::kSize) + ")");
    }
  }
}

void forward_step(const Net& net, std::span<const Token> input, std::span<const double* const> hprev,
                  bool readout, StepCache& cache, Scratch& scratch) {
  const int B = static_cast<int>(input.size());
  const int H = net.hidden(), E = net.embedding();
  cache.reset(net, B, readout);
  cache.input.assign(input.begin(), input.end());
  const auto& layout = net.layout();

  double* x0 = cache.x(0);
  for (int j = 0; j < B; ++j) {
    const double* e = net.at(layout.embedding + static_cast<std::size_t>(input[j]) * E);
    std::copy(e, e + E, x0 + static_cast<std::ptrdiff_t>(j) * E);
  }

  scratch.gx.resize(static_cast<std::size_t>(3) * H * B);
  scratch.gh.resize(static_cast<std::size_t>(3) * H * B);
  for (int l = 0; l < net.layers(); ++l) {
    const auto& L = layout.layers[l];
    const double* x = l == 0 ? cache.x(0) : cache.h(l - 1);
    std::copy(hprev[l], hprev[l] + static_cast<std::ptrdiff_t>(H) * B, cache.hprev(l));
    k::broadcast_bias(net.at(L.bx), 3 * H, B, scratch.gx.data());
    k::gemm_acc(net.at(L.wx), 3 * H, L.in, x, B, scratch.gx.data());
    k::broadcast_bias(net.at(L.bh), 3 * H, B, scratch.gh.data());
    k::gemm_acc(net.at(L.wh), 3 * H, H, cache.hprev(l), B, scratch.gh.data());
    double *r = cache.r(l), *z = cache.z(l), *n = cache.n(l), *ghn = cache.ghn(l), *h = cache.h(l);
    const double* hp = cache.hprev(l);
    for (int j = 0; j < B; ++j) {
      const double* gx = scratch.gx.data() + static_cast<std::ptrdiff_t>(j) * 3 * H;
      const double* gh = scratch.gh.data() + static_cast<std::ptrdiff_t>(j) * 3 * H;
      const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j) * H;
      for (int i = 0; i < H; ++i) {
        const double ri = sigmoid(gx[i] + gh[i]);
        const double zi = sigmoid(gx[H + i] + gh[H + i]);
        const double ni = std::tanh(gx[2 * H + i] + ri * gh[2 * H + i]);
        r[c + i] = ri;
        z[c + i] = zi;
        n[c + i] = ni;
        ghn[c + i] = gh[2 * H + i];
        h[c + i] = (1.0 - zi) * ni + zi * hp[c + i];
      }
    }
  }

  if (readout) {
    const int V = net.vocab();
    k::broadcast_bias(net.at(layout.bo), V, B, cache.logp.data());
    k::gemm_acc(net.at(layout.wo), V, H, cache.h(net.layers() - 1), B, cache.logp.data());
    k::log_softmax_columns(cache.logp.data(), V, B);
  }
}

void backward_step(const Net& net, const StepCache& cache, const double* dlogits,
                   std::vector<std::vector<double>>& carry, double* grad, Scratch& scratch) {
  const int B = cache.batch();
  const int H = net.hidden(), E = net.embedding(), V = net.vocab();
  const auto& layout = net.layout();
  const int top = net.layers() - 1;

  scratch.dh.assign(static_cast<std::size_t>(H) * B, 0.0);
  std::copy(carry[top].begin(), carry[top].begin() + static_cast<std::ptrdiff_t>(H) * B, scratch.dh.begin());
  if (dlogits != nullptr) {
    k::outer_acc(grad + layout.wo, V, H, dlogits, cache.h(top), B);
    k::row_sum_acc(dlogits, V, B, grad + layout.bo);
    k::gemm_t_acc(net.at(layout.wo), V, H, dlogits, B, scratch.dh.data());
  }

  scratch.dgx.resize(static_cast<std::size_t>(3) * H * B);
  scratch.dgh.resize(static_cast<std::size_t>(3) * H * B);
  for (int l = top; l >= 0; --l) {
    const auto& L = layout.layers[l];
    const double *r = cache.r(l), *z = cache.z(l), *n = cache.n(l), *ghn = cache.ghn(l),
                 *hp = cache.hprev(l);
    double* out_carry = carry[l].data();
    for (int j = 0; j < B; ++j) {
      const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j) * H;
      double* dgx = scratch.dgx.data() + 3 * c;
      double* dgh = scratch.dgh.data() + 3 * c;
      for (int i = 0; i < H; ++i) {
        const double dh = scratch.dh[c + i];
        const double dn = dh * (1.0 - z[c + i]);
        const double dz = dh * (hp[c + i] - n[c + i]);
        const double dan = dn * (1.0 - n[c + i] * n[c + i]);
        const double dr = dan * ghn[c + i];
        const double dar = dr * r[c + i] * (1.0 - r[c + i]);
        const double daz = dz * z[c + i] * (1.0 - z[c + i]);
        dgx[i] = dar;
        dgx[H + i] = daz;
        dgx[2 * H + i] = dan;
        dgh[i] = dar;
        dgh[H + i] = daz;
        dgh[2 * H + i] = dan * r[c + i];
        out_carry[c + i] = dh * z[c + i];
      }
    }
    const double* x = l == 0 ? cache.x(0) : cache.h(l - 1);
    k::outer_acc(grad + L.wx, 3 * H, L.in, scratch.dgx.data(), x, B);
    k::row_sum_acc(scratch.dgx.data(), 3 * H, B, grad + L.bx);
    k::outer_acc(grad + L.wh, 3 * H, H, scratch.dgh.data(), hp, B);
    k::row_sum_acc(scratch.dgh.data(), 3 * H, B, grad + L.bh);
    k::gemm_t_acc(net.at(L.wh), 3 * H, H, scratch.dgh.data(), B, out_carry);

    scratch.dx.assign(static_cast<std::size_t>(L.in) * B, 0.0);
    k::gemm_t_acc(net.at(L.wx), 3 * H, L.in, scratch.dgx.data(), B, scratch.dx.data());
    if (l > 0) {
      // dL/dh(l-1) at this step = recurrent carry + what flowed down from layer l.
      for (std::size_t i = 0; i < static_cast<std::size_t>(H) * B; ++i)
        scratch.dh[i] = carry[l - 1][i] + scratch.dx[i];
    } else {
      for (int j = 0; j < B; ++j) {
        k::axpy(1.0, scratch.dx.data() + static_cast<std::ptrdiff_t>(j) * E,
                grad + layout.embedding + static_cast<std::size_t>(cache.input[j]) * E, E);
      }
    }
  }
}

PromptState run_prompt(const Net& net, std::span<const Token> prompt, Scratch& scratch) {
  if (prompt.empty()) throw PolicyError("empty prompt");
  check_tokens(prompt, "prompt");
  const int H = net.hidden();
  PromptState st;
  st.h.assign(net.layers(), std::vector<double>(H, 0.0));
  StepCache cache;
  std::vector<const double*> hp(net.layers());
  for (std::size_t s = 0; s < prompt.size(); ++s) {
    for (int l = 0; l < net.layers(); ++l) hp[l] = st.h[l].data();
    const bool last = s + 1 == prompt.size();
    forward_step(net, prompt.subspan(s, 1), hp, last, cache, scratch);
    for (int l = 0; l < net.layers(); ++l) std::copy(cache.h(l), cache.h(l) + H, st.h[l].begin());
  }
  st.logp = cache.logp;
  return st;
}

GroupTrace forward_group(const Net& net, std::span<const Token> prompt,
                         std::span<const std::vector<Token>> completions, Scratch& scratch) {
  if (prompt.empty()) throw PolicyError("empty prompt");
  check_tokens(prompt, "prompt");
  const int H = net.hidden(), V = net.vocab();
  std::size_t longest = 0;
  for (const auto& c : completions) {
    if (c.empty()) throw PolicyError("empty completion");
    check_tokens(c, "completion");
    longest = std::max(longest, c.size());
  }
  if (prompt.size() + longest > static_cast<std::size_t>(net.arch().context)) {
    throw PolicyError("sequence of " + std::to_string(prompt.size() + longest) +
                      " tokens exceeds context length " + std::to_string(net.arch().context));
  }

  GroupTrace trace;
  const std::vector<double> zeros(H, 0.0);
  std::vector<const double*> hp(net.layers());

  trace.prompt_steps.resize(prompt.size());
  for (std::size_t s = 0; s < prompt.size(); ++s) {
    for (int l = 0; l < net.layers(); ++l) hp[l] = s == 0 ? zeros.data() : trace.prompt_steps[s - 1].h(l);
    forward_step(net, prompt.subspan(s, 1), hp, s + 1 == prompt.size(), trace.prompt_steps[s], scratch);
  }
  const StepCache& last = trace.prompt_steps.back();

  // Longest completions first so active columns always form a prefix.
  const int count = static_cast<int>(completions.size());
  trace.order.resize(count);
  std::iota(trace.order.begin(), trace.order.end(), 0);
  std::stable_sort(trace.order.begin(), trace.order.end(),
                   [&](int a, int b) { return completions[a].size() > completions[b].size(); });

  trace.logprobs.resize(count);
  for (int i = 0; i < count; ++i) {
    trace.logprobs[i].resize(completions[i].size());
    trace.logprobs[i][0] = last.logp[completions[i][0]];
  }

  const std::size_t steps = longest > 0 ? longest - 1 : 0;
  trace.completion_steps.resize(steps);
  std::vector<std::vector<double>> seed_h(net.layers());
  std::vector<Token> input;
  for (std::size_t kstep = 0; kstep < steps; ++kstep) {
    input.clear();
    for (int col = 0; col < count; ++col) {
      const auto& c = completions[trace.order[col]];
      if (c.size() < kstep + 2) break;
      input.push_back(c[kstep]);
    }
    const int B = static_cast<int>(input.size());
    if (kstep == 0) {
      for (int l = 0; l < net.layers(); ++l) {
        seed_h[l].resize(static_cast<std::size_t>(H) * B);
        for (int j = 0; j < B; ++j) std::copy(last.h(l), last.h(l) + H, seed_h[l].begin() + j * H);
        hp[l] = seed_h[l].data();
      }
    } else {
      for (int l = 0; l < net.layers(); ++l) hp[l] = trace.completion_steps[kstep - 1].h(l);
    }
    auto& cache = trace.completion_steps[kstep];
    forward_step(net, input, hp, true, cache, scratch);
    for (int col = 0; col < B; ++col) {
      const int i = trace.order[col];
      trace.logprobs[i][kstep + 1] = cache.logp[static_cast<std::size_t>(col) * V + completions[i][kstep + 1]];
    }
  }
  return trace;
}

void backward_group(const Net& net, const GroupTrace& trace, std::span<const std::vector<Token>> completions,
                    const std::vector<std::vector<double>>& weights, double* grad, Scratch& scratch) {
  const int H = net.hidden(), V = net.vocab(), L = net.layers();
  const int count = static_cast<int>(completions.size());

  scratch.carry.assign(L, std::vector<double>(static_cast<std::size_t>(H) * std::max(count, 1), 0.0));
  auto& carry = scratch.carry;

  for (std::size_t kstep = trace.completion_steps.size(); kstep-- > 0;) {
    const auto& cache = trace.completion_steps[kstep];
    const int B = cache.batch();
    scratch.dlogits.assign(static_cast<std::size_t>(V) * B, 0.0);
    for (int col = 0; col < B; ++col) {
      const int i = trace.order[col];
      const double w = weights[i][kstep + 1];
      if (w == 0.0) continue;
      double* d = scratch.dlogits.data() + static_cast<std::ptrdiff_t>(col) * V;
      const double* lp = cache.logp.data() + static_cast<std::ptrdiff_t>(col) * V;
      for (int v = 0; v < V; ++v) d[v] = -w * std::exp(lp[v]);
      d[completions[i][kstep + 1]] += w;
    }
    // dlogits is moved out of scratch because backward_step reuses scratch.
    std::vector<double> dlogits = std::move(scratch.dlogits);
    backward_step(net, cache, dlogits.data(), carry, grad, scratch);
    scratch.dlogits = std::move(dlogits);
  }

  // All completion columns share the prompt's final state.
  std::vector<std::vector<double>> prompt_carry(L, std::vector<double>(H, 0.0));
  if (!trace.completion_steps.empty()) {
    const int B0 = trace.completion_steps.front().batch();
    for (int l = 0; l < L; ++l)
      for (int col = 0; col < B0; ++col)
        k::axpy(1.0, carry[l].data() + static_cast<std::ptrdiff_t>(col) * H, prompt_carry[l].data(), H);
  }

  const StepCache& last = trace.prompt_steps.back();
  std::vector<double> dlogits(V, 0.0);
  bool any = false;
  for (int i = 0; i < count; ++i) {
    const double w = weights[i][0];
    if (w == 0.0) continue;
    any = true;
    for (int v = 0; v < V; ++v) dlogits[v] -= w * std::exp(last.logp[v]);
    dlogits[completions[i][0]] += w;
  }

  for (std::size_t s = trace.prompt_steps.size(); s-- > 0;) {
    const bool is_last = s + 1 == trace.prompt_steps.size();
    backward_step(net, trace.prompt_steps[s], is_last && any ? dlogits.data() : nullptr, prompt_carry, grad,
                  scratch);
  }
}

}  // namespace detail

// ---- public API ------------------------------------------------------------

std::vector<Token> prompt_tokens_for(std::string_view prompt) {
  std::vector<Token> tokens{Vocab::kBos};
  auto body = Vocab::encode(prompt);
  tokens.insert(tokens.end(), body.begin(), body.end());
  return tokens;
}

std::vector<Sample> sample_completions(const PolicyState& state, std::string_view prompt,
                                       const SamplingOptions& options) {
  if (options.count < 1) throw PolicyError("count must be >= 1");
  if (options.max_new_tokens < 1) throw PolicyError("max_new_tokens must be >= 1");
  if (!options.greedy && !(options.temperature > 0.0)) throw PolicyError("temperature must be positive");
  const auto prompt_tokens = prompt_tokens_for(prompt);
  const int context = state.arch.context;
  if (static_cast<int>(prompt_tokens.size()) >= context) {
    throw PolicyError("prompt of " + std::to_string(prompt_tokens.size()) + " tokens exceeds context length " +
                      std::to_string(context));
  }
  const detail::Net net(state);
  detail::Scratch scratch;
  const int H = net.hidden(), V = net.vocab(), L = net.layers();
  const int count = options.count;
  const int budget = std::min(options.max_new_tokens, context - static_cast<int>(prompt_tokens.size()));

  const auto start = detail::run_prompt(net, prompt_tokens, scratch);

  std::vector<Sample> samples(count);
  std::vector<Rng> rngs;
  rngs.reserve(count);
  for (int i = 0; i < count; ++i) {
    samples[i].prompt_tokens = prompt_tokens;
    rngs.emplace_back(derive_seed(options.seed, {static_cast<std::uint64_t>(i)}));
  }

  std::vector<double> probs(V);
  auto draw = [&](const double* logp, Rng& rng) -> Token {
    // PAD and BOS are never emitted; they have no text form.
    constexpr int first = Vocab::kEos;
    if (options.greedy) return static_cast<Token>(std::max_element(logp + first, logp + V) - logp);
    const double inv_t = 1.0 / options.temperature;
    double m = -INFINITY;
    for (int v = first; v < V; ++v) m = std::max(m, logp[v] * inv_t);
    double total = 0.0;
    for (int v = first; v < V; ++v) total += probs[v] = std::exp(logp[v] * inv_t - m);
    double u = uniform_unit(rng) * total;
    for (int v = first; v < V; ++v) {
      u -= probs[v];
      if (u < 0.0) return static_cast<Token>(v);
    }
    return static_cast<Token>(V - 1);
  };

  // Per-column hidden state for every layer.
  std::vector<std::vector<double>> state_h(L, std::vector<double>(static_cast<std::size_t>(H) * count));
  for (int l = 0; l < L; ++l)
    for (int i = 0; i < count; ++i) std::copy(start.h[l].begin(), start.h[l].end(), state_h[l].begin() + i * H);

  std::vector<int> active;
  for (int i = 0; i < count; ++i) {
    const Token t = draw(start.logp.data(), rngs[i]);
    samples[i].completion_tokens.push_back(t);
    samples[i].token_logprobs.push_back(start.logp[t]);
    if (t != Vocab::kEos && budget > 1) active.push_back(i);
  }

  detail::StepCache cache;
  std::vector<std::vector<double>> gathered(L);
  std::vector<const double*> hp(L);
  std::vector<Token> input;
  while (!active.empty()) {
    const int B = static_cast<int>(active.size());
    input.clear();
    for (int i : active) input.push_back(samples[i].completion_tokens.back());
    for (int l = 0; l < L; ++l) {
      gathered[l].resize(static_cast<std::size_t>(H) * B);
      for (int col = 0; col < B; ++col)
        std::copy(state_h[l].begin() + active[col] * H, state_h[l].begin() + (active[col] + 1) * H,
                  gathered[l].begin() + col * H);
      hp[l] = gathered[l].data();
    }
    detail::forward_step(net, input, hp, true, cache, scratch);
    std::vector<int> still;
    for (int col = 0; col < B; ++col) {
      const int i = active[col];
      for (int l = 0; l < L; ++l) std::copy(cache.h(l) + col * H, cache.h(l) + (col + 1) * H, state_h[l].begin() + i * H);
      const double* lp = cache.logp.data() + static_cast<std::ptrdiff_t>(col) * V;
      const Token t = draw(lp, rngs[i]);
      samples[i].completion_tokens.push_back(t);
      samples[i].token_logprobs.push_back(lp[t]);
      if (t != Vocab::kEos && static_cast<int>(samples[i].completion_tokens.size()) < budget) still.push_back(i);
    }
    active = std::move(still);
  }

  for (auto& s : samples) s.completion_text = Vocab::decode(s.completion_tokens);
  return samples;
}

std::vector<std::vector<double>> score_group(const PolicyState& state, std::span<const Token> prompt_tokens,
                                             std::span<const std::vector<Token>> completions) {
  if (completions.empty()) return {};
  const detail::Net net(state);
  detail::Scratch scratch;
  return detail::forward_group(net, prompt_tokens, completions, scratch).logprobs;
}

std::vector<double> score_tokens(const PolicyState& state, std::span<const Token> prompt_tokens,
                                 std::span<const Token> completion) {
  if (completion.empty()) return {};
  const std::vector<std::vector<Token>> one{std::vector<Token>(completion.begin(), completion.end())};
  return score_group(state, prompt_tokens, one).front();
}

std::vector<std::vector<double>> next_token_logprobs(const PolicyState& state,
                                                     std::span<const Token> prompt_tokens,
                                                     std::span<const Token> completion) {
  const detail::Net net(state);
  detail::Scratch scratch;
  const int V = net.vocab();
  std::vector<std::vector<double>> rows;
  if (completion.empty()) {
    rows.push_back(detail::run_prompt(net, prompt_tokens, scratch).logp);
    return rows;
  }
  const std::vector<std::vector<Token>> one{std::vector<Token>(completion.begin(), completion.end())};
  const auto trace = detail::forward_group(net, prompt_tokens, one, scratch);
  rows.push_back(trace.prompt_steps.back().logp);
  for (const auto& step : trace.completion_steps) rows.emplace_back(step.logp.begin(), step.logp.begin() + V);
  return rows;
}

}  // namespace sapo
