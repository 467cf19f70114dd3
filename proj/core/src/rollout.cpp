#include "subdyn/rollout.hpp"

namespace subdyn {

LatentTrajectory rollout(const IntegratorWeights& integrator, const VecX& z0, const VecX& z1,
                         const BcTrajectory& script, int steps, double dt) {
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 0");
  if (script.frame_count() < steps + 2)
    throw Error(ErrorCode::InvalidArgument, "script shorter than rollout horizon");

  LatentTrajectory traj;
  traj.dt = dt;
  traj.z = {z0, z1};
  traj.p = {script.params[0], script.params[1]};
  traj.z.reserve(steps + 2);
  traj.p.reserve(steps + 2);

  for (int s = 0; s < steps; ++s) {
    const int t = s + 2;
    const VecX& z_prev = traj.z[t - 1];
    const VecX& z_prev2 = traj.z[t - 2];
    VecX z_t = integrator_predict(integrator, z_prev, z_prev2, script.params[t],
                                  script.params[t - 1], script.params[t - 2]);
    if (!is_finite(z_t))
      throw Error(ErrorCode::NonFiniteLatent, "step " + std::to_string(t));
    traj.z.push_back(std::move(z_t));
    traj.p.push_back(script.params[t]);
  }
  return traj;
}

std::vector<VecX> decode_trajectory(const AutoencoderWeights& ae, const LatentTrajectory& traj,
                                    const BcTrajectory& script) {
  if (script.frame_count() < static_cast<int>(traj.z.size()))
    throw Error(ErrorCode::MissingBcValues, "script shorter than trajectory");
  std::vector<VecX> frames;
  frames.reserve(traj.z.size());
  for (size_t t = 0; t < traj.z.size(); ++t) {
    VecX anchor(3 * script.vertices.size());
    for (size_t k = 0; k < script.vertices.size(); ++k)
      anchor.segment<3>(3 * k) = script.targets[t].segment<3>(3 * k);
    frames.push_back(ae_decode(ae, traj.z[t], anchor));
  }
  return frames;
}

VecX metric_bc_residual(const std::vector<VecX>& frames, const BcTrajectory& script) {
  if (script.frame_count() < static_cast<int>(frames.size()))
    throw Error(ErrorCode::LengthMismatch, "script shorter than frames");
  VecX out(frames.size());
  for (size_t t = 0; t < frames.size(); ++t) {
    double worst = 0.0;
    for (size_t k = 0; k < script.vertices.size(); ++k) {
      const double d = (frames[t].segment<3>(3 * script.vertices[k]) -
                        script.targets[t].segment<3>(3 * k))
                           .norm();
      worst = std::max(worst, d);
    }
    out[t] = worst;
  }
  return out;
}

VecX metric_kinetic_energy(const std::vector<VecX>& frames, const MassVector& mass, double dt) {
  if (frames.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 frames");
  VecX out = VecX::Zero(frames.size());
  const int n = static_cast<int>(mass.size());
  for (size_t t = 1; t < frames.size(); ++t) {
    double ke = 0.0;
    for (int i = 0; i < n; ++i)
      ke += mass[i] *
            (frames[t].segment<3>(3 * i) - frames[t - 1].segment<3>(3 * i)).squaredNorm();
    out[t] = 0.5 * ke / (dt * dt);
  }
  return out;
}

VecX metric_vertex_rmse(const std::vector<VecX>& frames_a, const std::vector<VecX>& frames_b) {
  if (frames_a.size() != frames_b.size())
    throw Error(ErrorCode::LengthMismatch, "frame count mismatch");
  VecX out(frames_a.size());
  for (size_t t = 0; t < frames_a.size(); ++t) {
    if (frames_a[t].size() != frames_b[t].size())
      throw Error(ErrorCode::LengthMismatch, "frame size mismatch");
    const int n = static_cast<int>(frames_a[t].size()) / 3;
    out[t] = std::sqrt((frames_a[t] - frames_b[t]).squaredNorm() / n);
  }
  return out;
}

}  // namespace subdyn
