#pragma once

#include "subdyn/autoencoder.hpp"

namespace subdyn {

/// Latent integrator: z_t = I(z_{t-1}, z_{t-2}, p_t, p_{t-1}, p_{t-2}).
/// Plain Swish MLP; inputs standardized, output de-standardized by training
/// latent statistics.
struct IntegratorWeights {
  MlpSpec spec;
  MlpWeights net;
  VecX in_mean, in_std;    // over stacked inputs
  VecX out_mean, out_std;  // over training latents
  int latent_dim = 0;
  int bc_dim = 0;
};

VecX integrator_predict(const IntegratorWeights& integrator, const VecX& z_prev,
                        const VecX& z_prev2, const VecX& p_t, const VecX& p_prev,
                        const VecX& p_prev2);

/// History context for the incremental-potential loss: ground-truth previous
/// positions and Dirichlet anchor positions at the predicted step.
struct SelfsupContext {
  VecX x_prev, x_prev2;
  VecX anchor_positions_t;
};

struct SelfsupLossParts {
  double total = 0.0, inertial = 0.0, elastic = 0.0, external = 0.0, bc = 0.0;
};

/// Full-space incremental potential evaluated at the decoded prediction, with
/// its gradient w.r.t. the predicted latent chained through the decoder.
/// Rod scenarios (non-penalty) omit the boundary term; penalty scenarios add
/// w_bc || x - x* ||^2 over the Dirichlet vertices.
SelfsupLossParts selfsup_loss(const VecX& z_pred, const SelfsupContext& ctx,
                              const AutoencoderWeights& ae, const SimObject& obj,
                              const MaterialParams& params, double dt, bool penalty_bc,
                              double w_bc, VecX* grad_z);

/// Adds iid uniform noise in [-0.1 s_d, 0.1 s_d] per latent dimension, where
/// s_d is the standard deviation over the combined {z_prev, z_prev2} batch.
/// Boundary parameters are never touched.
void perturb_latents(MatX& z_prev_batch, MatX& z_prev2_batch, Rng& rng);

/// Eq-6 style data balancing: 1 / max(|mean vertex velocity|, 1e-6 m/s).
double balance_weight(const VecX& x_prev, const VecX& x_prev2, double dt);

struct IntTrainConfig {
  int epochs = 10000;
  int batch = 128;
  double lr = 1e-4;
  double lr_decay = 1.0;    // final lr fraction, ramped linearly over epochs
  double grad_clip = 10.0;  // global gradient-norm clip per step; <= 0 disables
  uint64_t seed = 1;
  bool noise = true;
  bool balancing = true;
  bool supervised = false;  // L2 on latents instead of the physics loss
};

/// Trains the latent integrator on consecutive (t-2, t-1, t) triples of the
/// scenario's training split. The autoencoder stays frozen.
std::pair<IntegratorWeights, TrainReport> train_integrator(
    const ScenarioSpec& spec, const ScenarioAssets& assets,
    const std::vector<StateSequence>& dataset, const AutoencoderWeights& ae,
    const IntTrainConfig& cfg);

void save_integrator(const std::string& path, const IntegratorWeights& integrator);
IntegratorWeights load_integrator(const std::string& path);

}  // namespace subdyn
