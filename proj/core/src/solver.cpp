#include "subdyn/solver.hpp"

#include <limits>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

namespace subdyn {
namespace {

using SparseMat = Eigen::SparseMatrix<double>;

// -1 for constrained dofs, otherwise the free-dof index.
std::vector<int> build_free_map(int dofs, const DirichletSet& dirichlet, int* num_free) {
  std::vector<int> map(dofs, 0);
  for (int v : dirichlet.vertices)
    for (int k = 0; k < 3; ++k) map[3 * v + k] = -1;
  int next = 0;
  for (int d = 0; d < dofs; ++d)
    if (map[d] == 0) map[d] = next++;
    else map[d] = -1;
  *num_free = next;
  return map;
}

SparseMat assemble_projected(const EnergyReport& rep, const std::vector<int>& free_map,
                             int num_free) {
  std::vector<Eigen::Triplet<double>> trips;
  size_t nnz = 0;
  for (const auto& blk : rep.element_hessians) nnz += blk.H.size();
  trips.reserve(nnz);
  for (const auto& blk : rep.element_hessians) {
    const MatX h = project_pd(blk.H, pd_projection_eps(blk.H));
    const int nv = static_cast<int>(blk.verts.size());
    for (int a = 0; a < nv; ++a)
      for (int ra = 0; ra < 3; ++ra) {
        const int row = free_map[3 * blk.verts[a] + ra];
        if (row < 0) continue;
        for (int b = 0; b < nv; ++b)
          for (int rb = 0; rb < 3; ++rb) {
            const int col = free_map[3 * blk.verts[b] + rb];
            if (col < 0) continue;
            trips.emplace_back(row, col, h(3 * a + ra, 3 * b + rb));
          }
      }
  }
  SparseMat m(num_free, num_free);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

VecX restrict_free(const VecX& full, const std::vector<int>& free_map, int num_free) {
  VecX out(num_free);
  for (size_t d = 0; d < free_map.size(); ++d)
    if (free_map[d] >= 0) out[free_map[d]] = full[d];
  return out;
}

void scatter_free(const VecX& free_vals, const std::vector<int>& free_map, VecX& full) {
  for (size_t d = 0; d < free_map.size(); ++d)
    if (free_map[d] >= 0) full[d] = free_vals[free_map[d]];
}

VecX solve_linear(const SparseMat& h, const VecX& rhs, const SolverConfig& cfg) {
  if (cfg.linear_solver == LinearSolverKind::SparseCholesky) {
    Eigen::SimplicialLDLT<SparseMat> chol(h);
    if (chol.info() != Eigen::Success)
      throw Error(ErrorCode::LinearSolveFailure, "sparse Cholesky factorization failed");
    VecX x = chol.solve(rhs);
    if (chol.info() != Eigen::Success)
      throw Error(ErrorCode::LinearSolveFailure, "sparse Cholesky solve failed");
    return x;
  }
  Eigen::ConjugateGradient<SparseMat, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      pcg(h);
  pcg.setTolerance(cfg.pcg_tol);
  pcg.setMaxIterations(static_cast<Eigen::Index>(cfg.pcg_max_iter_factor) * h.rows());
  VecX x = pcg.solve(rhs);
  if (pcg.info() != Eigen::Success)
    throw Error(ErrorCode::LinearSolveFailure, "PCG did not converge");
  return x;
}

}  // namespace

double characteristic_force(const MassVector& mass, const Vec3& gravity) {
  const double g = gravity.norm();
  const double n = static_cast<double>(mass.size());
  const double f = mass.sum() * g / std::max(1.0, n);
  return f > 1e-30 ? f : 1.0;
}

std::pair<VecX, NewtonStats> newton_minimize(const Objective& objective, const VecX& x0,
                                             const DirichletSet& dirichlet,
                                             const SolverConfig& cfg, double char_force) {
  const int dofs = static_cast<int>(x0.size());
  int num_free = 0;
  const std::vector<int> free_map = build_free_map(dofs, dirichlet, &num_free);

  VecX x = x0;
  for (size_t k = 0; k < dirichlet.vertices.size(); ++k)
    x.segment<3>(3 * dirichlet.vertices[k]) = dirichlet.targets.segment<3>(3 * k);

  NewtonStats stats;
  stats.tol_used = cfg.grad_tol * (char_force > 0.0 ? char_force : 1.0);

  EnergyReport rep = objective(x, EvalMode::WithHessian);
  for (int iter = 0; iter <= cfg.max_newton_iters; ++iter) {
    stats.energy_history.push_back(rep.value);
    VecX g_free = restrict_free(rep.gradient, free_map, num_free);
    stats.final_grad_inf = num_free ? g_free.cwiseAbs().maxCoeff() : 0.0;
    stats.final_energy = rep.value;
    if (stats.final_grad_inf <= stats.tol_used) {
      stats.converged = true;
      return {x, stats};
    }
    if (iter == cfg.max_newton_iters || num_free == 0) break;

    SparseMat h = assemble_projected(rep, free_map, num_free);
    VecX step = solve_linear(h, -g_free, cfg);
    if (!(g_free.dot(step) < 0.0) || !step.allFinite()) step = -g_free;

    // Armijo backtracking; states outside an energy's domain count as +inf,
    // and a roundoff slack keeps progress near machine-precision minima
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(rep.value);
    VecX x_free = restrict_free(x, free_map, num_free);
    auto try_direction = [&](const VecX& dir) {
      const double descent = g_free.dot(dir);
      double alpha = 1.0;
      for (int h_iter = 0; h_iter <= cfg.max_halvings; ++h_iter) {
        VecX x_trial = x;
        scatter_free(x_free + alpha * dir, free_map, x_trial);
        double trial_value = std::numeric_limits<double>::infinity();
        try {
          trial_value = objective(x_trial, EvalMode::ValueOnly).value;
        } catch (const Error&) {
        }
        if (std::isfinite(trial_value) &&
            trial_value <= rep.value + cfg.armijo_c * alpha * descent + slack) {
          x = std::move(x_trial);
          return true;
        }
        alpha *= cfg.backtrack_factor;
      }
      return false;
    };
    bool accepted = try_direction(step);
    if (!accepted && step != -g_free) accepted = try_direction(-g_free);
    if (!accepted) {
      stats.line_search_failed = true;
      return {x, stats};
    }
    stats.iterations = iter + 1;
    rep = objective(x, EvalMode::WithHessian);
  }
  return {x, stats};
}

StateSequence simulate(const SimObject& obj, const MaterialParams& params,
                       const BcTrajectory& script, int frames, double dt,
                       const SolverConfig& cfg, NewtonStats* last_stats) {
  if (frames < 3) throw Error(ErrorCode::InvalidArgument, "need at least 3 frames");
  if (script.frame_count() < frames)
    throw Error(ErrorCode::InvalidArgument, "boundary script shorter than requested frames");

  const double char_force = characteristic_force(obj.mass, params.gravity);
  StateSequence seq;
  seq.dt = dt;

  auto scripted_frame = [&](int t) {
    Frame f;
    f.t = t;
    f.x = obj.rest.positions;
    for (size_t k = 0; k < script.vertices.size(); ++k)
      f.x.segment<3>(3 * script.vertices[k]) = script.targets[t].segment<3>(3 * k);
    f.p = script.params.empty() ? VecX() : script.params[t];
    return f;
  };
  seq.frames.push_back(scripted_frame(0));
  seq.frames.push_back(scripted_frame(1));

  for (int t = 2; t < frames; ++t) {
    const VecX& x_prev = seq.frames[t - 1].x;
    const VecX& x_prev2 = seq.frames[t - 2].x;

    IncrementalPotential pot;
    pot.obj = &obj;
    pot.params = &params;
    pot.x_prev = x_prev;
    pot.x_prev2 = x_prev2;
    pot.dt = dt;

    DirichletSet dirichlet{script.vertices, script.targets[t]};
    VecX warm = 2.0 * x_prev - x_prev2;

    auto objective = [&pot](const VecX& x, EvalMode mode) { return pot.eval(x, mode); };
    try {
      // fall back to the previous state if the inertia prediction leaves an
      // energy's domain
      {
        VecX probe = warm;
        for (size_t k = 0; k < script.vertices.size(); ++k)
          probe.segment<3>(3 * script.vertices[k]) = script.targets[t].segment<3>(3 * k);
        try {
          (void)objective(probe, EvalMode::ValueOnly);
        } catch (const Error&) {
          warm = x_prev;
        }
      }
      auto [x_next, stats] = newton_minimize(objective, warm, dirichlet, cfg, char_force);
      if (last_stats) *last_stats = stats;
      Frame f;
      f.t = t;
      f.x = std::move(x_next);
      f.p = script.params.empty() ? VecX() : script.params[t];
      seq.frames.push_back(std::move(f));
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return seq;
}

}  // namespace subdyn
