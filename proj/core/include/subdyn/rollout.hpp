#pragma once

#include "subdyn/integrator.hpp"

namespace subdyn {

struct LatentTrajectory {
  std::vector<VecX> z;  // seeds z0, z1, then one entry per step
  std::vector<VecX> p;  // aligned boundary parameters
  double dt = 1.0 / 30.0;
};

/// Autoregressive latent rollout. Pure latent-space loop: no energy
/// evaluation, no decoder call. `script` must provide params for steps+2
/// frames. Throws NonFiniteLatent with the offending step index.
LatentTrajectory rollout(const IntegratorWeights& integrator, const VecX& z0, const VecX& z1,
                         const BcTrajectory& script, int steps, double dt = 1.0 / 30.0);

/// Decoded absolute frames for a latent trajectory, using the script's
/// Dirichlet targets as boundary values.
std::vector<VecX> decode_trajectory(const AutoencoderWeights& ae, const LatentTrajectory& traj,
                                    const BcTrajectory& script);

/// Max constrained-vertex deviation from the scripted target, per frame.
VecX metric_bc_residual(const std::vector<VecX>& frames, const BcTrajectory& script);

/// KE_t = 1/2 sum_i m_i |(x_{i,t} - x_{i,t-1}) / dt|^2; entry 0 is zero.
VecX metric_kinetic_energy(const std::vector<VecX>& frames, const MassVector& mass, double dt);

/// Per-frame RMS over vertices of the position difference.
VecX metric_vertex_rmse(const std::vector<VecX>& frames_a, const std::vector<VecX>& frames_b);

/// One OBJ per frame (frame_%05d.obj): rods as polylines, shells as faces,
/// solids as boundary faces. Returns the file count.
int export_obj_sequence(const std::vector<VecX>& frames, const Topology& topo,
                        const std::string& dir);

}  // namespace subdyn
