#pragma once

#include <algorithm>

namespace sapo {

/// Asymmetric ratio clip bounds: ratios are clipped to [1 - low, 1 + high].
struct ClipRange {
  double low = 0.2;
  double high = 0.28;
};

/// Per-token clipped surrogate, negated for minimization:
///   -min(ratio * A, clip(ratio, 1 - low, 1 + high) * A)
inline double clipped_token_loss(double ratio, double advantage, ClipRange clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip.low, 1.0 + clip.high);
  return -std::min(ratio * advantage, clipped * advantage);
}

/// True when the unclipped branch attains the min (ties count as unclipped).
inline bool unclipped_branch_active(double ratio, double advantage, ClipRange clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip.low, 1.0 + clip.high);
  return ratio * advantage <= clipped * advantage;
}

/// d(clipped_token_loss)/d(log pi) for ratio = exp(log pi - log pi_old).
inline double clipped_token_loss_dlogp(double ratio, double advantage, ClipRange clip) {
  return unclipped_branch_active(ratio, advantage, clip) ? -advantage * ratio : 0.0;
}

}  // namespace sapo
