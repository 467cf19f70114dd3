#pragma once

#include <functional>

#include "subdyn/energy.hpp"
#include "subdyn/sequence.hpp"

namespace subdyn {

enum class LinearSolverKind { SparseCholesky, Pcg };

struct SolverConfig {
  int max_newton_iters = 50;
  double grad_tol = 1e-6;  // on the free-DOF gradient inf-norm, scaled by a characteristic force
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  int max_halvings = 20;
  LinearSolverKind linear_solver = LinearSolverKind::SparseCholesky;
  double pcg_tol = 1e-10;
  int pcg_max_iter_factor = 10;  // max iters = factor * n
};

/// Dirichlet constraints for one solve: fixed vertices and their targets.
struct DirichletSet {
  std::vector<int> vertices;  // unique, in range
  VecX targets;               // 3 * |vertices|
};

struct NewtonStats {
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double final_grad_inf = 0.0;
  double final_energy = 0.0;
  double tol_used = 0.0;
  std::vector<double> energy_history;  // objective value at each iterate
};

using Objective = std::function<EnergyReport(const VecX&, EvalMode)>;

/// Newton with backtracking line search on the PD-projected Hessian restricted
/// to free DOFs. Dirichlet DOFs are eliminated and kept exactly at targets.
/// char_force scales grad_tol into an absolute force tolerance (pass <= 0 to
/// use 1.0).
std::pair<VecX, NewtonStats> newton_minimize(const Objective& objective, const VecX& x0,
                                             const DirichletSet& dirichlet,
                                             const SolverConfig& cfg, double char_force = 0.0);

/// Per-frame boundary trajectory: constrained vertex ids stay fixed, targets
/// and bc parameter vectors vary per frame. Provides at least `frames` entries.
struct BcTrajectory {
  std::vector<int> vertices;
  std::vector<VecX> targets;  // per frame, 3 * |vertices|
  std::vector<VecX> params;   // per frame, bc_dim

  int frame_count() const { return static_cast<int>(targets.size()); }
};

/// Full-space implicit Euler. Frames 0 and 1 start at rest positions with the
/// scripted Dirichlet values applied; every later frame minimizes the
/// incremental potential warm-started from the inertia prediction.
StateSequence simulate(const SimObject& obj, const MaterialParams& params,
                       const BcTrajectory& script, int frames, double dt,
                       const SolverConfig& cfg = {}, NewtonStats* last_stats = nullptr);

/// Characteristic force total_mass * |g| / N used to scale gradient tolerances.
double characteristic_force(const MassVector& mass, const Vec3& gravity);

}  // namespace subdyn
