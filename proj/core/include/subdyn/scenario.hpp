#pragma once

#include "subdyn/encoding.hpp"
#include "subdyn/solver.hpp"

namespace subdyn {

/// One scripted dataset sequence of a scenario.
struct SequenceScript {
  enum class Kind { TranslationReversing, ConstantRotation, LinearTrajectory, Sinusoid, Static };
  Kind kind = Kind::Static;
  double speed = 0.0;       // m/s, TranslationReversing / LinearTrajectory
  int period_frames = 10;   // reversal interval / oscillation period
  double omega = 0.0;       // rad/s, ConstantRotation
  Vec3 direction{1, 0, 0};
  double profile_amp = 0.0;  // LinearTrajectory speed modulation
  double amplitude = 0.0;    // Sinusoid displacement amplitude
};

enum class MeshKind { RodGrid, ClothGrid, BeamTetGrid, TwoLobeSolid, TwoEarSolid };
enum class SplitRule { BySequence, ByPrefix };

struct ScenarioSpec {
  std::string name;
  MeshKind mesh = MeshKind::RodGrid;
  MaterialParams material;
  GeometryAux aux;
  double dt = 1.0 / 30.0;
  int frames = 100;
  int bc_dim = 3;
  std::vector<SequenceScript> sequences;

  RelativeEncoding::Mode encoding_mode = RelativeEncoding::Mode::RootRelative;
  bool penalty_bc = false;  // learning loss uses the quadratic boundary penalty
  double w_bc = 1e5;

  int latent_dim = 4;
  int pca_dim = 50;
  std::vector<int> ae_hidden{64, 64};
  std::vector<int> int_hidden{64, 64};
  int ae_epochs = 20000;
  int int_epochs = 10000;
  int ae_batch = 500;
  int int_batch = 128;
  double lr = 1e-4;

  SplitRule split = SplitRule::ByPrefix;
  double prefix_fraction = 0.5;
  std::vector<int> test_sequences;
};

/// Named desk-scale scenarios: rod-translation, rod-rotation, cloth-pinned,
/// beam-cantilever, solid-swing, bunny-ears-like. Throws UnknownScenario.
ScenarioSpec build_scenario(const std::string& name);
std::vector<std::string> scenario_names();

std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& json_text);

struct ScenarioAssets {
  SimObject object;
  std::vector<int> dirichlet_verts;
  RelativeEncoding encoding;
};
ScenarioAssets build_assets(const ScenarioSpec& spec);

/// Boundary parameter vector of a script at frame t (velocity for rods,
/// target displacement for cloth/solids, zeros for static scripts).
VecX bc_params_at(const ScenarioSpec& spec, const SequenceScript& script, int t);

/// Dirichlet targets plus parameter vectors for `frames` frames (defaults to
/// spec.frames when frames < 0).
BcTrajectory bc_trajectory(const ScenarioSpec& spec, const ScenarioAssets& assets,
                           const SequenceScript& script, int frames = -1);

/// One simulated StateSequence per scripted sequence. `threads` caps the
/// sequence-level parallelism (<=0 reads SUBDYN_THREADS, then hardware).
std::vector<StateSequence> generate_dataset(const ScenarioSpec& spec, const ScenarioAssets& assets,
                                            int threads = 0, const SolverConfig& cfg = {});

struct DatasetSplit {
  SplitRule rule = SplitRule::ByPrefix;
  std::vector<int> train_sequences, test_sequences;
  int prefix_boundary = 0;  // ByPrefix: first test frame index
};
DatasetSplit make_split(const ScenarioSpec& spec);

/// Training frames per sequence under a split (all frames of train sequences,
/// or the prefix of every sequence).
std::vector<std::pair<int, int>> train_frame_ranges(const DatasetSplit& split, int num_sequences,
                                                    int frames_per_sequence);

int thread_budget(int requested);

}  // namespace subdyn
