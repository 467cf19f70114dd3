#include <doctest.h>

#include "subdyn/scenario.hpp"
#include "support.hpp"

using namespace subdyn;

TEST_CASE("named scenarios have the documented sequence sets") {
  ScenarioSpec tr = build_scenario("rod-translation");
  CHECK(tr.sequences.size() == 12);
  CHECK(tr.sequences.front().speed == doctest::Approx(10.0));
  CHECK(tr.sequences.back().speed == doctest::Approx(120.0));
  CHECK(tr.bc_dim == 3);

  ScenarioSpec rr = build_scenario("rod-rotation");
  CHECK(rr.sequences.size() == 7);
  CHECK(rr.sequences.front().omega == doctest::Approx(0.1));
  CHECK(rr.sequences.back().omega == doctest::Approx(0.4));
  CHECK(rr.bc_dim == 1);

  ScenarioSpec beam = build_scenario("beam-cantilever");
  CHECK(beam.sequences.size() == 1);
  CHECK(beam.sequences[0].kind == SequenceScript::Kind::Static);
  CHECK(make_split(beam).prefix_boundary == 100);

  CHECK_THROWS_AS(build_scenario("no-such-scenario"), Error);
}

TEST_CASE("desk-scale meshes have the documented structure") {
  ScenarioAssets rods = build_assets(build_scenario("rod-translation"));
  CHECK(rods.object.topology.num_vertices == 200);  // 10 strands x 20 vertices
  CHECK(rods.object.topology.strands.size() == 10);
  CHECK(rods.dirichlet_verts.size() == 10);
  CHECK(rods.encoding.encoded_dim() == 3 * 190);  // roots excluded

  ScenarioAssets cloth = build_assets(build_scenario("cloth-pinned"));
  CHECK(cloth.object.topology.num_vertices == 64);  // 8x8 grid, 192 DoF
  CHECK(cloth.dirichlet_verts.size() == 2);

  ScenarioAssets beam = build_assets(build_scenario("beam-cantilever"));
  CHECK(beam.object.topology.num_vertices == 13 * 5 * 5);
  CHECK(beam.object.topology.tets.size() == 6 * 4 * 4 * 12);
  CHECK(beam.dirichlet_verts.size() == 25);

  for (const char* name : {"solid-swing", "bunny-ears-like"}) {
    ScenarioAssets solid = build_assets(build_scenario(name));
    CHECK(solid.object.topology.kind == TopologyKind::TetMesh);
    CHECK(!solid.dirichlet_verts.empty());
  }
}

TEST_CASE("bc_params_at follows the script contracts") {
  ScenarioSpec spec = build_scenario("rod-translation");
  const SequenceScript& fast = spec.sequences[3];  // 40 m/s

  SUBCASE("translation reverses every period") {
    for (int t = 0; t < 10; ++t)
      CHECK(bc_params_at(spec, fast, t)[0] == doctest::Approx(fast.speed));
    for (int t = 10; t < 20; ++t)
      CHECK(bc_params_at(spec, fast, t)[0] == doctest::Approx(-fast.speed));
    CHECK(bc_params_at(spec, fast, 20)[0] == doctest::Approx(fast.speed));
  }

  SUBCASE("constant rotation is constant") {
    ScenarioSpec rot = build_scenario("rod-rotation");
    for (int t = 0; t < 30; ++t)
      CHECK(bc_params_at(rot, rot.sequences[2], t)[0] == doctest::Approx(0.2));
  }

  SUBCASE("static scripts give zero parameters") {
    ScenarioSpec beam = build_scenario("beam-cantilever");
    for (int t = 0; t < 5; ++t)
      CHECK(bc_params_at(beam, beam.sequences[0], t).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("bc parameters are reconstructible from the Dirichlet trajectory") {
  SUBCASE("translation: p is the per-step anchor velocity") {
    ScenarioSpec spec = build_scenario("rod-translation");
    ScenarioAssets assets = build_assets(spec);
    BcTrajectory traj = bc_trajectory(spec, assets, spec.sequences[1], 25);
    for (int t = 1; t < 25; ++t) {
      VecX vel = (traj.targets[t] - traj.targets[t - 1]) / spec.dt;
      for (size_t k = 0; k < traj.vertices.size(); ++k)
        CHECK((vel.segment<3>(3 * k) - traj.params[t]).norm() < 1e-9 * spec.sequences[1].speed);
    }
  }
  SUBCASE("rotation: targets advance by R(omega dt) about the root centroid") {
    ScenarioSpec spec = build_scenario("rod-rotation");
    ScenarioAssets assets = build_assets(spec);
    const SequenceScript& script = spec.sequences[6];  // 0.4 rad/s
    BcTrajectory traj = bc_trajectory(spec, assets, script, 20);
    Vec3 center = Vec3::Zero();
    for (size_t k = 0; k < traj.vertices.size(); ++k)
      center += assets.object.rest.positions.segment<3>(3 * traj.vertices[k]);
    center /= static_cast<double>(traj.vertices.size());
    Eigen::AngleAxisd step(script.omega * spec.dt, Vec3::UnitY());
    for (int t = 1; t < 20; ++t)
      for (size_t k = 0; k < traj.vertices.size(); ++k) {
        Vec3 predicted = center + step * (traj.targets[t - 1].segment<3>(3 * k) - center);
        CHECK((predicted - traj.targets[t].segment<3>(3 * k)).norm() < 1e-10);
      }
  }
  SUBCASE("displacement scripts: p equals the target displacement") {
    ScenarioSpec spec = build_scenario("cloth-pinned");
    ScenarioAssets assets = build_assets(spec);
    BcTrajectory traj = bc_trajectory(spec, assets, spec.sequences[0], 30);
    for (int t = 0; t < 30; ++t)
      for (size_t k = 0; k < traj.vertices.size(); ++k) {
        Vec3 disp = traj.targets[t].segment<3>(3 * k) - traj.targets[0].segment<3>(3 * k);
        CHECK((disp - traj.params[t]).norm() < 1e-10);
      }
  }
}

TEST_CASE("generated data satisfies the solver contracts") {
  // shrunk rod-translation: 2 sequences, 8 frames
  ScenarioSpec spec = build_scenario("rod-translation");
  spec.frames = 8;
  spec.sequences = {spec.sequences[0], spec.sequences[5]};
  ScenarioAssets assets = build_assets(spec);

  auto dataset = generate_dataset(spec, assets, 2);
  REQUIRE(dataset.size() == 2);
  REQUIRE(dataset[0].frame_count() == 8);

  const double char_force = characteristic_force(assets.object.mass, spec.material.gravity);
  SolverConfig cfg;
  for (size_t s = 0; s < dataset.size(); ++s) {
    BcTrajectory traj = bc_trajectory(spec, assets, spec.sequences[s]);
    for (int t = 2; t < 8; ++t) {
      const Frame& f = dataset[s].frames[t];
      // Dirichlet script holds exactly
      for (size_t k = 0; k < traj.vertices.size(); ++k)
        CHECK((f.x.segment<3>(3 * traj.vertices[k]) - traj.targets[t].segment<3>(3 * k))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
      // free-DOF gradient below the solver tolerance
      IncrementalPotential pot;
      pot.obj = &assets.object;
      pot.params = &spec.material;
      pot.x_prev = dataset[s].frames[t - 1].x;
      pot.x_prev2 = dataset[s].frames[t - 2].x;
      pot.dt = spec.dt;
      EnergyReport rep = pot.eval(f.x, EvalMode::WithGradient);
      double worst = 0.0;
      std::vector<char> constrained(assets.object.topology.num_vertices, 0);
      for (int v : traj.vertices) constrained[v] = 1;
      for (int v = 0; v < assets.object.topology.num_vertices; ++v)
        if (!constrained[v])
          worst = std::max(worst, rep.gradient.segment<3>(3 * v).cwiseAbs().maxCoeff());
      CHECK(worst <= cfg.grad_tol * char_force);
    }
  }

  SUBCASE("deterministic across thread budgets") {
    auto serial = generate_dataset(spec, assets, 1);
    for (size_t s = 0; s < dataset.size(); ++s)
      for (int t = 0; t < 8; ++t) CHECK(serial[s].frames[t].x == dataset[s].frames[t].x);
  }
}

TEST_CASE("scenario JSON round trip") {
  for (const std::string& name : scenario_names()) {
    ScenarioSpec spec = build_scenario(name);
    ScenarioSpec back = scenario_from_json(scenario_to_json(spec));
    CHECK(back.name == spec.name);
    CHECK(back.frames == spec.frames);
    CHECK(back.sequences.size() == spec.sequences.size());
    CHECK(back.latent_dim == spec.latent_dim);
    CHECK(back.material.youngs_modulus == spec.material.youngs_modulus);
    CHECK(back.prefix_fraction == spec.prefix_fraction);
    for (size_t i = 0; i < spec.sequences.size(); ++i) {
      CHECK(back.sequences[i].kind == spec.sequences[i].kind);
      CHECK(back.sequences[i].speed == spec.sequences[i].speed);
      CHECK(back.sequences[i].omega == spec.sequences[i].omega);
    }
  }
}
