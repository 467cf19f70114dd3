#include "subdyn/adam.hpp"

#include <cmath>

namespace subdyn {

void adam_step(VecX& weights, const VecX& grads, AdamState& state) {
  if (weights.size() != grads.size() || weights.size() != state.m.size())
    throw Error(ErrorCode::LengthMismatch, "adam_step buffer shapes");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  weights.array() -=
      state.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.eps);
}

}  // namespace subdyn
