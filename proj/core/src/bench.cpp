#include "subdyn/bench.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

namespace subdyn {
namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median per-call milliseconds; each sample times `inner` calls.
template <typename F>
double time_median_ms(int repeats, int inner, F&& fn) {
  const int warmup = std::max(1, repeats / 10);
  std::vector<double> samples;
  samples.reserve(repeats);
  for (int rep = 0; rep < warmup + repeats; ++rep) {
    const auto t0 = Clock::now();
    for (int k = 0; k < inner; ++k) fn();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / inner;
    if (rep >= warmup) samples.push_back(ms);
  }
  return median(samples);
}

}  // namespace

uint64_t fnv1a_hash(const std::string& text) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string BenchResult::to_json() const {
  nlohmann::json j;
  j["integrator_ms"] = integrator_ms;
  j["decoder_ms"] = decoder_ms;
  j["ours_total_ms"] = ours_total_ms();
  j["jvp_ms"] = jvp_ms;
  j["newton_step_ms"] = newton_step_ms;
  j["newton_iters"] = newton_iters;
  j["newton_tol"] = newton_tol;
  j["repeats"] = repeats;
  j["machine"] = machine;
  j["config_hash"] = config_hash;
  j["speedup_vs_newton"] = newton_step_ms / std::max(ours_total_ms(), 1e-12);
  return j.dump(2);
}

BenchResult bench(const ScenarioSpec& spec, const ScenarioAssets& assets,
                  const AutoencoderWeights& ae, const IntegratorWeights& integrator, int repeats,
                  const SolverConfig& solver_cfg) {
  BenchResult result;
  result.repeats = repeats;
  result.config_hash = fnv1a_hash(scenario_to_json(spec));
#if defined(__clang__)
  result.machine = "clang " __clang_version__;
#elif defined(__GNUC__)
  result.machine = "gcc " __VERSION__;
#else
  result.machine = "unknown compiler";
#endif
  result.machine += ", eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION) + ", single thread, f32 inference";

  // representative mid-trajectory state from a short ground-truth run
  const SequenceScript& script = spec.sequences.front();
  const int warm_frames = 6;
  BcTrajectory traj = bc_trajectory(spec, assets, script, warm_frames + 1);
  StateSequence warm = simulate(assets.object, spec.material, traj, warm_frames, spec.dt,
                                solver_cfg);

  const VecX z_prev = ae_encode(ae, warm.frames[warm_frames - 1].x);
  const VecX z_prev2 = ae_encode(ae, warm.frames[warm_frames - 2].x);

  // --- learned path, float32
  IntegratorF32 integ_f = make_integrator_f32(integrator);
  DecoderF32 dec_f = make_decoder_f32(ae);

  Eigen::VectorXf q(integrator.spec.input_dim);
  q << z_prev.cast<float>(), z_prev2.cast<float>(),
      traj.params[warm_frames].cast<float>(), traj.params[warm_frames - 1].cast<float>(),
      traj.params[warm_frames - 2].cast<float>();

  Eigen::VectorXf z_f = z_prev.cast<float>();
  volatile float sink = 0.f;

  result.integrator_ms = time_median_ms(repeats, 16, [&] {
    Eigen::VectorXf out = integrator_predict_f32(integ_f, q);
    sink = sink + out[0];
  });

  const Eigen::VectorXf anchor_f = traj.targets[warm_frames].cast<float>();
  result.decoder_ms = time_median_ms(repeats, 16, [&] {
    Eigen::VectorXf rel = decode_relative_f32(dec_f, z_f);
    // assemble absolute positions, matching the production decode path
    if (ae.encoding.mode == RelativeEncoding::Mode::RootRelative) {
      Eigen::VectorXf x = Eigen::VectorXf::Zero(3 * ae.encoding.num_vertices);
      for (size_t s = 0; s < ae.encoding.anchors.size(); ++s)
        x.segment<3>(3 * ae.encoding.anchors[s]) = anchor_f.segment<3>(3 * s);
      for (size_t k = 0; k < ae.encoding.encoded_verts.size(); ++k)
        x.segment<3>(3 * ae.encoding.encoded_verts[k]) =
            rel.segment<3>(3 * k) + anchor_f.segment<3>(3 * ae.encoding.anchor_slot[k]);
      sink = sink + x[0];
    } else {
      Eigen::Vector3f ref = Eigen::Vector3f::Zero();
      for (size_t s = 0; s < ae.encoding.anchors.size(); ++s)
        ref += anchor_f.segment<3>(3 * s);
      ref /= static_cast<float>(ae.encoding.anchors.size());
      Eigen::VectorXf x = rel;
      for (int i = 0; i < ae.encoding.num_vertices; ++i) x.segment<3>(3 * i) += ref;
      sink = sink + x[0];
    }
  });

  // one decoder Jacobian-vector product: reverse sweep seeded at one output
  // vertex row (the comparison primitive of optimization-based latent solvers)
  Eigen::VectorXf seed = Eigen::VectorXf::Zero(dec_f.net.output_dim);
  for (int k = 0; k < 3 && k < dec_f.net.output_dim; ++k) seed[k] = dec_f.in_std[k];
  result.jvp_ms = time_median_ms(repeats, 16, [&] {
    MlpF32::Trace trace;
    Eigen::VectorXf out = dec_f.net.apply_traced(z_f, trace);
    Eigen::VectorXf g = dec_f.net.vjp(trace, seed);
    sink = sink + out[0] + g[0];
  });

  // --- one full-space Newton simulation step (production double path)
  {
    IncrementalPotential pot;
    pot.obj = &assets.object;
    pot.params = &spec.material;
    pot.x_prev = warm.frames[warm_frames - 1].x;
    pot.x_prev2 = warm.frames[warm_frames - 2].x;
    pot.dt = spec.dt;
    DirichletSet dirichlet{traj.vertices, traj.targets[warm_frames]};
    const VecX warm_start = 2.0 * pot.x_prev - pot.x_prev2;
    const double char_force = characteristic_force(assets.object.mass, spec.material.gravity);
    auto objective = [&pot](const VecX& x, EvalMode mode) { return pot.eval(x, mode); };

    NewtonStats stats;
    const int newton_repeats = std::max(3, repeats / 10);
    result.newton_step_ms = time_median_ms(newton_repeats, 1, [&] {
      auto [x, st] = newton_minimize(objective, warm_start, dirichlet, solver_cfg, char_force);
      stats = st;
      sink = sink + static_cast<float>(x[0]);
    });
    result.newton_iters = stats.iterations;
    result.newton_tol = stats.tol_used;
  }
  (void)sink;
  return result;
}

}  // namespace subdyn
