#include <benchmark/benchmark.h>

#include "subdyn/scenario.hpp"

using namespace subdyn;

namespace {

struct Fixture {
  ScenarioSpec spec;
  ScenarioAssets assets;
  VecX x;
  Fixture(const std::string& name) : spec(build_scenario(name)), assets(build_assets(spec)) {
    x = assets.object.rest.positions;
    Rng rng(1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += 0.01 * (2.0 * rng.uniform() - 1.0);
  }
};

}  // namespace

static void ElasticGradient(benchmark::State& state, const std::string& name) {
  Fixture f(name);
  for (auto _ : state) {
    EnergyReport rep = elastic_energy(f.x, f.assets.object, f.spec.material,
                                      EvalMode::WithGradient);
    benchmark::DoNotOptimize(rep.value);
  }
}
BENCHMARK_CAPTURE(ElasticGradient, rods, std::string("rod-translation"));
BENCHMARK_CAPTURE(ElasticGradient, cloth, std::string("cloth-pinned"));
BENCHMARK_CAPTURE(ElasticGradient, beam, std::string("beam-cantilever"));

static void ElasticHessian(benchmark::State& state, const std::string& name) {
  Fixture f(name);
  for (auto _ : state) {
    EnergyReport rep = elastic_energy(f.x, f.assets.object, f.spec.material,
                                      EvalMode::WithHessian);
    benchmark::DoNotOptimize(rep.element_hessians.size());
  }
}
BENCHMARK_CAPTURE(ElasticHessian, rods, std::string("rod-translation"));
BENCHMARK_CAPTURE(ElasticHessian, cloth, std::string("cloth-pinned"));
BENCHMARK_CAPTURE(ElasticHessian, beam, std::string("beam-cantilever"));

static void SimulateStep(benchmark::State& state, const std::string& name) {
  Fixture f(name);
  BcTrajectory traj = bc_trajectory(f.spec, f.assets, f.spec.sequences.front(), 8);
  StateSequence warm = simulate(f.assets.object, f.spec.material, traj, 6, f.spec.dt);
  IncrementalPotential pot;
  pot.obj = &f.assets.object;
  pot.params = &f.spec.material;
  pot.x_prev = warm.frames[5].x;
  pot.x_prev2 = warm.frames[4].x;
  pot.dt = f.spec.dt;
  DirichletSet dirichlet{traj.vertices, traj.targets[6]};
  const VecX start = 2.0 * pot.x_prev - pot.x_prev2;
  const double cf = characteristic_force(f.assets.object.mass, f.spec.material.gravity);
  auto objective = [&pot](const VecX& x, EvalMode m) { return pot.eval(x, m); };
  for (auto _ : state) {
    auto [x, stats] = newton_minimize(objective, start, dirichlet, {}, cf);
    benchmark::DoNotOptimize(x[0]);
  }
}
BENCHMARK_CAPTURE(SimulateStep, cloth, std::string("cloth-pinned"));
BENCHMARK_CAPTURE(SimulateStep, rods, std::string("rod-translation"));
