#pragma once

#include "subdyn/inference_f32.hpp"
#include "subdyn/rollout.hpp"

namespace subdyn {

struct BenchResult {
  double integrator_ms = 0.0;   // one latent integrator forward
  double decoder_ms = 0.0;      // one decode to full space
  double jvp_ms = 0.0;          // one decoder Jacobian-vector product, reverse mode
  double newton_step_ms = 0.0;  // one full-space implicit Euler step
  int newton_iters = 0;
  double newton_tol = 0.0;
  int repeats = 0;
  std::string machine;
  uint64_t config_hash = 0;

  double ours_total_ms() const { return integrator_ms + decoder_ms; }
  std::string to_json() const;
};

/// Median wall times over `repeats` samples (first repeats/10 discarded as
/// warmup), single thread, float32 inference path for the learned components.
BenchResult bench(const ScenarioSpec& spec, const ScenarioAssets& assets,
                  const AutoencoderWeights& ae, const IntegratorWeights& integrator, int repeats,
                  const SolverConfig& solver_cfg = {});

uint64_t fnv1a_hash(const std::string& text);

}  // namespace subdyn
