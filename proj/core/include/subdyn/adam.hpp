#pragma once

#include "subdyn/common.hpp"

namespace subdyn {

struct AdamState {
  VecX m, v;
  int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState create(Eigen::Index params, double lr = 1e-4) {
    AdamState s;
    s.m = VecX::Zero(params);
    s.v = VecX::Zero(params);
    s.lr = lr;
    return s;
  }
};

/// Standard Adam update with bias correction, in place.
void adam_step(VecX& weights, const VecX& grads, AdamState& state);

}  // namespace subdyn
