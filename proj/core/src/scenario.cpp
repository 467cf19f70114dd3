#include "subdyn/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

namespace subdyn {
namespace {

using nlohmann::json;

// --- procedural meshes -------------------------------------------------------

struct BuiltMesh {
  Topology topo;
  VecX rest;
  std::vector<int> dirichlet;
};

BuiltMesh build_rod_grid() {
  // 10 strands x 20 vertices, roots along x, hanging in -y
  const int strands_n = 10, verts_per = 20;
  const double seg = 0.05, spacing = 0.04;
  std::vector<std::vector<int>> strands(strands_n);
  VecX rest(3 * strands_n * verts_per);
  std::vector<int> roots;
  for (int s = 0; s < strands_n; ++s) {
    const double x0 = spacing * s - spacing * (strands_n - 1) / 2.0;
    for (int k = 0; k < verts_per; ++k) {
      const int v = s * verts_per + k;
      strands[s].push_back(v);
      rest.segment<3>(3 * v) = Vec3(x0, -seg * k, 0.0);
    }
    roots.push_back(s * verts_per);
  }
  return {make_rod_set(strands_n * verts_per, std::move(strands)), rest, roots};
}

BuiltMesh build_cloth_grid() {
  // 8x8 vertices hanging in the xy plane, pinned at the two top corners
  const int nx = 8, ny = 8;
  const double h = 0.07;
  VecX rest(3 * nx * ny);
  std::vector<std::array<int, 3>> tris;
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      rest.segment<3>(3 * id(i, j)) = Vec3(h * i, -h * j, 0.0);
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
      tris.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return {make_tri_mesh(nx * ny, std::move(tris)), rest, {id(0, 0), id(nx - 1, 0)}};
}

struct LatticeBox {
  int x0, x1, y0, y1, z0, z1;  // inclusive cell ranges
};

BuiltMesh build_lattice_solid(const std::vector<LatticeBox>& boxes, double h,
                              const std::function<bool(int, int, int)>& is_dirichlet) {
  std::map<std::array<int, 3>, int> vid;
  std::vector<std::array<int, 3>> coords;
  auto vertex = [&](int i, int j, int k) {
    auto [it, inserted] = vid.try_emplace({i, j, k}, static_cast<int>(coords.size()));
    if (inserted) coords.push_back({i, j, k});
    return it->second;
  };

  std::map<std::array<int, 3>, bool> cells;
  for (const auto& b : boxes)
    for (int i = b.x0; i <= b.x1; ++i)
      for (int j = b.y0; j <= b.y1; ++j)
        for (int k = b.z0; k <= b.z1; ++k) cells[{i, j, k}] = true;

  std::vector<std::array<int, 4>> tets;
  // Kuhn decomposition around the main diagonal c0-c7
  static const int kt[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7},
                               {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};
  std::vector<int> corner(8);
  for (const auto& [c, _] : cells) {
    for (int b = 0; b < 8; ++b)
      corner[b] = vertex(c[0] + (b & 1), c[1] + ((b >> 1) & 1), c[2] + ((b >> 2) & 1));
    for (const auto& t : kt)
      tets.push_back({corner[t[0]], corner[t[1]], corner[t[2]], corner[t[3]]});
  }

  VecX rest(3 * coords.size());
  std::vector<int> dirichlet;
  for (size_t v = 0; v < coords.size(); ++v) {
    rest.segment<3>(3 * v) = h * Vec3(coords[v][0], coords[v][1], coords[v][2]);
    if (is_dirichlet(coords[v][0], coords[v][1], coords[v][2]))
      dirichlet.push_back(static_cast<int>(v));
  }

  // fix tet orientation so rest volumes are positive
  for (auto& t : tets) {
    Eigen::Matrix3d dm;
    dm.col(0) = rest.segment<3>(3 * t[1]) - rest.segment<3>(3 * t[0]);
    dm.col(1) = rest.segment<3>(3 * t[2]) - rest.segment<3>(3 * t[0]);
    dm.col(2) = rest.segment<3>(3 * t[3]) - rest.segment<3>(3 * t[0]);
    if (dm.determinant() < 0.0) std::swap(t[2], t[3]);
  }
  return {make_tet_mesh(static_cast<int>(coords.size()), std::move(tets)), rest, dirichlet};
}

BuiltMesh build_beam() {
  // 4x4x12 cells, clamped at the x=0 face, length along x
  return build_lattice_solid({{0, 11, 0, 3, 0, 3}}, 0.1,
                             [](int i, int, int) { return i == 0; });
}

BuiltMesh build_two_lobe() {
  // slab on top, two lobes hanging from its ends; fixed at the top face
  std::vector<LatticeBox> boxes = {
      {0, 5, 4, 5, 0, 1},  // slab
      {0, 1, 0, 3, 0, 1},  // lobe A
      {4, 5, 0, 3, 0, 1},  // lobe B
  };
  return build_lattice_solid(boxes, 0.1, [](int, int j, int) { return j == 6; });
}

BuiltMesh build_two_ear() {
  // rigidly scripted band at the bottom, two deformable ears on top
  std::vector<LatticeBox> boxes = {
      {0, 5, 0, 0, 0, 1},  // band
      {0, 1, 1, 5, 0, 1},  // ear A
      {4, 5, 1, 5, 0, 1},  // ear B
  };
  return build_lattice_solid(boxes, 0.08, [](int, int j, int) { return j <= 1; });
}

BuiltMesh build_mesh(MeshKind kind) {
  switch (kind) {
    case MeshKind::RodGrid: return build_rod_grid();
    case MeshKind::ClothGrid: return build_cloth_grid();
    case MeshKind::BeamTetGrid: return build_beam();
    case MeshKind::TwoLobeSolid: return build_two_lobe();
    case MeshKind::TwoEarSolid: return build_two_ear();
  }
  throw Error(ErrorCode::InvalidArgument, "unknown mesh kind");
}

Vec3 rotation_center(const VecX& rest, const std::vector<int>& verts) {
  Vec3 c = Vec3::Zero();
  for (int v : verts) c += rest.segment<3>(3 * v);
  return c / static_cast<double>(verts.size());
}

int reversing_sign(int t, int period) { return ((t / period) % 2 == 0) ? 1 : -1; }

// cumulative anchor displacement of a script at frame t
Vec3 script_displacement(const SequenceScript& s, double dt, int t) {
  switch (s.kind) {
    case SequenceScript::Kind::TranslationReversing: {
      double c = 0.0;
      for (int tau = 1; tau <= t; ++tau) c += reversing_sign(tau, s.period_frames);
      return s.direction * (s.speed * dt * c);
    }
    case SequenceScript::Kind::LinearTrajectory: {
      double c = 0.0;
      for (int tau = 1; tau <= t; ++tau)
        c += s.speed * (1.0 + s.profile_amp *
                                  std::sin(2.0 * M_PI * (tau - 1) / std::max(1, s.period_frames)));
      return s.direction * (dt * c);
    }
    case SequenceScript::Kind::Sinusoid:
      return s.direction * (s.amplitude * std::sin(2.0 * M_PI * t / std::max(1, s.period_frames)));
    case SequenceScript::Kind::ConstantRotation:
    case SequenceScript::Kind::Static:
      return Vec3::Zero();
  }
  return Vec3::Zero();
}

}  // namespace

int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SUBDYN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::vector<std::string> scenario_names() {
  return {"rod-translation", "rod-rotation",  "cloth-pinned",
          "beam-cantilever", "solid-swing", "bunny-ears-like"};
}

ScenarioSpec build_scenario(const std::string& name) {
  ScenarioSpec spec;
  spec.name = name;

  if (name == "rod-translation" || name == "rod-rotation") {
    spec.mesh = MeshKind::RodGrid;
    spec.material.youngs_modulus = 4e7;
    spec.material.poisson_ratio = 0.35;
    spec.material.density = 1320.0;
    spec.material.rod_radius = 7e-4;
    spec.aux.rod_radius = 7e-4;
    spec.encoding_mode = RelativeEncoding::Mode::RootRelative;
    spec.penalty_bc = false;
    spec.latent_dim = 4;
    spec.frames = 100;
    if (name == "rod-translation") {
      spec.bc_dim = 3;
      for (int i = 0; i < 12; ++i) {
        SequenceScript s;
        s.kind = SequenceScript::Kind::TranslationReversing;
        s.speed = 10.0 * (i + 1);
        s.period_frames = 10;
        s.direction = Vec3(1, 0, 0);
        spec.sequences.push_back(s);
      }
      spec.split = SplitRule::BySequence;
      spec.test_sequences = {0};  // slowest speed held out
    } else {
      spec.bc_dim = 1;
      for (int i = 0; i < 7; ++i) {
        SequenceScript s;
        s.kind = SequenceScript::Kind::ConstantRotation;
        s.omega = 0.1 + 0.05 * i;
        spec.sequences.push_back(s);
      }
      spec.split = SplitRule::BySequence;
      spec.test_sequences = {};  // tested on interpolated speeds
    }
    return spec;
  }

  if (name == "cloth-pinned") {
    spec.mesh = MeshKind::ClothGrid;
    spec.material.youngs_modulus = 1e6;
    spec.material.poisson_ratio = 0.45;
    spec.material.density = 1500.0;
    spec.material.shell_thickness = 0.003;
    spec.aux.shell_thickness = 0.003;
    spec.encoding_mode = RelativeEncoding::Mode::DirichletMeanRelative;
    spec.penalty_bc = true;
    spec.latent_dim = 4;
    spec.frames = 300;
    spec.bc_dim = 3;
    SequenceScript s;
    s.kind = SequenceScript::Kind::LinearTrajectory;
    s.speed = 0.25;
    s.profile_amp = 0.5;
    s.period_frames = 75;
    s.direction = Vec3(0.8, 0.0, 0.6).normalized();
    spec.sequences = {s};
    spec.split = SplitRule::ByPrefix;
    spec.prefix_fraction = 0.5;
    return spec;
  }

  if (name == "beam-cantilever") {
    spec.mesh = MeshKind::BeamTetGrid;
    spec.material.youngs_modulus = 5e5;
    spec.material.poisson_ratio = 0.45;
    spec.material.density = 1000.0;
    spec.encoding_mode = RelativeEncoding::Mode::DirichletMeanRelative;
    spec.penalty_bc = true;
    spec.latent_dim = 4;
    spec.frames = 300;
    spec.bc_dim = 3;
    SequenceScript s;
    s.kind = SequenceScript::Kind::Static;
    spec.sequences = {s};
    spec.split = SplitRule::ByPrefix;
    spec.prefix_fraction = 100.0 / 300.0;  // first 100 frames train
    return spec;
  }

  if (name == "solid-swing" || name == "bunny-ears-like") {
    spec.mesh = name == "solid-swing" ? MeshKind::TwoLobeSolid : MeshKind::TwoEarSolid;
    spec.material.youngs_modulus = 2e5;
    spec.material.poisson_ratio = 0.48;
    spec.material.density = 1000.0;
    spec.encoding_mode = RelativeEncoding::Mode::DirichletMeanRelative;
    spec.penalty_bc = true;
    spec.latent_dim = name == "solid-swing" ? 12 : 8;
    spec.frames = name == "solid-swing" ? 200 : 150;
    spec.bc_dim = 3;
    SequenceScript s;
    s.kind = SequenceScript::Kind::Sinusoid;
    s.amplitude = name == "solid-swing" ? 0.25 : 0.2;
    s.period_frames = name == "solid-swing" ? 100 : 80;
    s.direction = Vec3(1, 0, 0);
    spec.sequences = {s};
    spec.split = SplitRule::ByPrefix;
    spec.prefix_fraction = 0.6;
    return spec;
  }

  throw Error(ErrorCode::UnknownScenario, name);
}

ScenarioAssets build_assets(const ScenarioSpec& spec) {
  BuiltMesh mesh = build_mesh(spec.mesh);
  ScenarioAssets assets;
  assets.object = precompute_rest(mesh.topo, mesh.rest, spec.material.density, spec.aux);
  assets.dirichlet_verts = mesh.dirichlet;
  assets.encoding = spec.encoding_mode == RelativeEncoding::Mode::RootRelative
                        ? make_root_relative(assets.object.topology)
                        : make_dirichlet_mean_relative(assets.object.topology.num_vertices,
                                                       mesh.dirichlet);
  return assets;
}

VecX bc_params_at(const ScenarioSpec& spec, const SequenceScript& script, int t) {
  switch (script.kind) {
    case SequenceScript::Kind::TranslationReversing: {
      VecX p(3);
      p = script.direction * (script.speed * reversing_sign(t, script.period_frames));
      return p;
    }
    case SequenceScript::Kind::ConstantRotation: {
      VecX p(1);
      p[0] = script.omega;
      return p;
    }
    case SequenceScript::Kind::LinearTrajectory:
    case SequenceScript::Kind::Sinusoid: {
      VecX p(3);
      p = script_displacement(script, spec.dt, t);
      return p;
    }
    case SequenceScript::Kind::Static:
      return VecX::Zero(spec.bc_dim);
  }
  return VecX::Zero(spec.bc_dim);
}

BcTrajectory bc_trajectory(const ScenarioSpec& spec, const ScenarioAssets& assets,
                           const SequenceScript& script, int frames) {
  if (frames < 0) frames = spec.frames;
  BcTrajectory traj;
  traj.vertices = assets.dirichlet_verts;
  traj.targets.reserve(frames);
  traj.params.reserve(frames);

  const VecX& rest = assets.object.rest.positions;
  const Vec3 center = rotation_center(rest, traj.vertices);

  for (int t = 0; t < frames; ++t) {
    VecX targets(3 * traj.vertices.size());
    if (script.kind == SequenceScript::Kind::ConstantRotation) {
      const double angle = script.omega * spec.dt * t;
      Eigen::AngleAxisd rot(angle, Vec3::UnitY());
      for (size_t k = 0; k < traj.vertices.size(); ++k) {
        const Vec3 x0 = rest.segment<3>(3 * traj.vertices[k]);
        targets.segment<3>(3 * k) = center + rot * (x0 - center);
      }
    } else {
      const Vec3 d = script_displacement(script, spec.dt, t);
      for (size_t k = 0; k < traj.vertices.size(); ++k)
        targets.segment<3>(3 * k) = rest.segment<3>(3 * traj.vertices[k]) + d;
    }
    traj.targets.push_back(std::move(targets));
    traj.params.push_back(bc_params_at(spec, script, t));
  }
  return traj;
}

std::vector<StateSequence> generate_dataset(const ScenarioSpec& spec, const ScenarioAssets& assets,
                                            int threads, const SolverConfig& cfg) {
  const int n = static_cast<int>(spec.sequences.size());
  std::vector<StateSequence> out(n);
  std::vector<std::exception_ptr> errors(n);
  const int workers = std::min(thread_budget(threads), std::max(1, n));

  std::atomic<int> next{0};
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        BcTrajectory traj = bc_trajectory(spec, assets, spec.sequences[i]);
        out[i] = simulate(assets.object, spec.material, traj, spec.frames, spec.dt, cfg);
        out[i].scenario = spec.name;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (int i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
  return out;
}

DatasetSplit make_split(const ScenarioSpec& spec) {
  DatasetSplit split;
  split.rule = spec.split;
  const int n = static_cast<int>(spec.sequences.size());
  if (spec.split == SplitRule::BySequence) {
    for (int i = 0; i < n; ++i) {
      bool test = std::find(spec.test_sequences.begin(), spec.test_sequences.end(), i) !=
                  spec.test_sequences.end();
      (test ? split.test_sequences : split.train_sequences).push_back(i);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      split.train_sequences.push_back(i);
      split.test_sequences.push_back(i);
    }
    split.prefix_boundary =
        static_cast<int>(std::lround(spec.prefix_fraction * spec.frames));
    if (split.prefix_boundary <= 2 || split.prefix_boundary >= spec.frames)
      throw Error(ErrorCode::InvalidArgument, "prefix split boundary not strictly inside");
  }
  return split;
}

std::vector<std::pair<int, int>> train_frame_ranges(const DatasetSplit& split, int num_sequences,
                                                    int frames_per_sequence) {
  std::vector<std::pair<int, int>> ranges(num_sequences, {0, 0});
  if (split.rule == SplitRule::BySequence) {
    for (int i : split.train_sequences) ranges[i] = {0, frames_per_sequence};
  } else {
    for (int i = 0; i < num_sequences; ++i) ranges[i] = {0, split.prefix_boundary};
  }
  return ranges;
}

// --- JSON config -------------------------------------------------------------

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
Vec3 vec3_from_json(const json& j) { return Vec3(j[0], j[1], j[2]); }

const std::map<std::string, SequenceScript::Kind> kScriptKinds = {
    {"translation-reversing", SequenceScript::Kind::TranslationReversing},
    {"constant-rotation", SequenceScript::Kind::ConstantRotation},
    {"linear-trajectory", SequenceScript::Kind::LinearTrajectory},
    {"sinusoid", SequenceScript::Kind::Sinusoid},
    {"static", SequenceScript::Kind::Static},
};
const std::map<std::string, MeshKind> kMeshKinds = {
    {"rod-grid", MeshKind::RodGrid},           {"cloth-grid", MeshKind::ClothGrid},
    {"beam-tet-grid", MeshKind::BeamTetGrid},  {"two-lobe-solid", MeshKind::TwoLobeSolid},
    {"two-ear-solid", MeshKind::TwoEarSolid},
};

template <typename T>
std::string enum_name(const std::map<std::string, T>& m, T value) {
  for (const auto& [k, v] : m)
    if (v == value) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown enum value");
}

template <typename T>
T enum_value(const std::map<std::string, T>& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw Error(ErrorCode::InvalidArgument, "unknown enum name: " + name);
  return it->second;
}

}  // namespace

std::string scenario_to_json(const ScenarioSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["mesh"] = enum_name(kMeshKinds, spec.mesh);
  j["material"] = {{"youngs_modulus", spec.material.youngs_modulus},
                   {"poisson_ratio", spec.material.poisson_ratio},
                   {"density", spec.material.density},
                   {"rod_radius", spec.material.rod_radius},
                   {"shell_thickness", spec.material.shell_thickness},
                   {"gravity", vec3_to_json(spec.material.gravity)}};
  j["dt"] = spec.dt;
  j["frames"] = spec.frames;
  j["bc_dim"] = spec.bc_dim;
  json seqs = json::array();
  for (const auto& s : spec.sequences)
    seqs.push_back({{"kind", enum_name(kScriptKinds, s.kind)},
                    {"speed", s.speed},
                    {"period_frames", s.period_frames},
                    {"omega", s.omega},
                    {"direction", vec3_to_json(s.direction)},
                    {"profile_amp", s.profile_amp},
                    {"amplitude", s.amplitude}});
  j["sequences"] = seqs;
  j["encoding"] =
      spec.encoding_mode == RelativeEncoding::Mode::RootRelative ? "root" : "dirichlet-mean";
  j["penalty_bc"] = spec.penalty_bc;
  j["w_bc"] = spec.w_bc;
  j["latent_dim"] = spec.latent_dim;
  j["pca_dim"] = spec.pca_dim;
  j["ae_hidden"] = spec.ae_hidden;
  j["int_hidden"] = spec.int_hidden;
  j["ae_epochs"] = spec.ae_epochs;
  j["int_epochs"] = spec.int_epochs;
  j["ae_batch"] = spec.ae_batch;
  j["int_batch"] = spec.int_batch;
  j["lr"] = spec.lr;
  j["split"] = spec.split == SplitRule::BySequence ? "by-sequence" : "by-prefix";
  j["prefix_fraction"] = spec.prefix_fraction;
  j["test_sequences"] = spec.test_sequences;
  return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  ScenarioSpec spec;
  spec.name = j.at("name");
  spec.mesh = enum_value(kMeshKinds, j.at("mesh"));
  const json& m = j.at("material");
  spec.material.youngs_modulus = m.at("youngs_modulus");
  spec.material.poisson_ratio = m.at("poisson_ratio");
  spec.material.density = m.at("density");
  spec.material.rod_radius = m.at("rod_radius");
  spec.material.shell_thickness = m.at("shell_thickness");
  spec.material.gravity = vec3_from_json(m.at("gravity"));
  spec.aux.rod_radius = spec.material.rod_radius;
  spec.aux.shell_thickness = spec.material.shell_thickness;
  spec.dt = j.at("dt");
  spec.frames = j.at("frames");
  spec.bc_dim = j.at("bc_dim");
  spec.sequences.clear();
  for (const auto& s : j.at("sequences")) {
    SequenceScript seq;
    seq.kind = enum_value(kScriptKinds, s.at("kind"));
    seq.speed = s.at("speed");
    seq.period_frames = s.at("period_frames");
    seq.omega = s.at("omega");
    seq.direction = vec3_from_json(s.at("direction"));
    seq.profile_amp = s.at("profile_amp");
    seq.amplitude = s.at("amplitude");
    spec.sequences.push_back(seq);
  }
  spec.encoding_mode = j.at("encoding") == "root" ? RelativeEncoding::Mode::RootRelative
                                                  : RelativeEncoding::Mode::DirichletMeanRelative;
  spec.penalty_bc = j.at("penalty_bc");
  spec.w_bc = j.at("w_bc");
  spec.latent_dim = j.at("latent_dim");
  spec.pca_dim = j.at("pca_dim");
  spec.ae_hidden = j.at("ae_hidden").get<std::vector<int>>();
  spec.int_hidden = j.at("int_hidden").get<std::vector<int>>();
  spec.ae_epochs = j.at("ae_epochs");
  spec.int_epochs = j.at("int_epochs");
  spec.ae_batch = j.at("ae_batch");
  spec.int_batch = j.at("int_batch");
  spec.lr = j.at("lr");
  spec.split = j.at("split") == "by-sequence" ? SplitRule::BySequence : SplitRule::ByPrefix;
  spec.prefix_fraction = j.at("prefix_fraction");
  spec.test_sequences = j.at("test_sequences").get<std::vector<int>>();
  return spec;
}

}  // namespace subdyn
