#pragma once

#include <atomic>
#include <map>

#include "subdyn/material.hpp"
#include "subdyn/sim_object.hpp"

namespace subdyn {

/// Dense symmetric Hessian block coupling a small vertex stencil.
struct ElementBlock {
  std::vector<int> verts;
  MatX H;  // 3v x 3v, symmetric
};

struct EnergyReport {
  double value = 0.0;
  VecX gradient;
  std::vector<ElementBlock> element_hessians;

  EnergyReport() = default;
  explicit EnergyReport(int dofs) : gradient(VecX::Zero(dofs)) {}

  void add(const EnergyReport& other);
};

enum class EvalMode { ValueOnly, WithGradient, WithHessian };

/// Number of energy evaluations since process start. Latent rollouts must
/// leave this untouched.
uint64_t energy_eval_count();

// --- individual terms -------------------------------------------------------

/// E = 1/(2 dt^2) (x - y)^T M (x - y), y = 2 x_prev - x_prev2.
EnergyReport inertial_energy(const VecX& x, const VecX& x_prev, const VecX& x_prev2,
                             const MassVector& mass, double dt,
                             EvalMode mode = EvalMode::WithHessian);

/// E = -sum_i m_i g . x_i
EnergyReport gravity_energy(const VecX& x, const MassVector& mass, const Vec3& g,
                            EvalMode mode = EvalMode::WithHessian);

/// Per edge: E = ks/2 (|e|/|ebar| - 1)^2 |ebar|, ks = E pi r^2.
EnergyReport rod_stretch_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                const MaterialParams& params,
                                EvalMode mode = EvalMode::WithHessian);

/// Curvature-binormal bending at interior strand vertices,
/// kb_i = 2 (e_{i-1} x e_i) / (|ebar_{i-1}||ebar_i| + e_{i-1}.e_i),
/// E = sum kb_coef/lbar |kb|^2. Hessian is the Gauss-Newton J^T J block.
EnergyReport rod_bend_energy(const VecX& x, const Topology& topo, const RestState& rest,
                             const MaterialParams& params,
                             EvalMode mode = EvalMode::WithHessian);

/// StVK membrane on the rest metric: E = sum Abar h (mu |eps|_F^2 + lambda/2 tr(eps)^2).
EnergyReport shell_membrane_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                   const MaterialParams& params,
                                   EvalMode mode = EvalMode::WithHessian);

/// Hinge bending: E = sum k (theta - theta_bar)^2 |ebar|^2 / Abar_hinge.
EnergyReport shell_hinge_bend_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                     const MaterialParams& params,
                                     EvalMode mode = EvalMode::WithHessian);

/// Linear tets with StVK: F = Ds Dm^-1, E = sum Vbar (mu |E|_F^2 + lambda/2 tr(E)^2).
EnergyReport tet_stvk_energy(const VecX& x, const Topology& topo, const RestState& rest,
                             const MaterialParams& params,
                             EvalMode mode = EvalMode::WithHessian);

/// Quadratic anchor penalty, E = w sum ||x_i - target_i||^2.
EnergyReport bc_penalty_energy(const VecX& x, const std::vector<int>& verts, const VecX& targets,
                               double w_bc, EvalMode mode = EvalMode::WithHessian);

/// Elastic terms for the object's topology kind, summed.
EnergyReport elastic_energy(const VecX& x, const SimObject& obj, const MaterialParams& params,
                            EvalMode mode = EvalMode::WithHessian);

/// Signed dihedral angle at a hinge; zero when the two triangles are coplanar.
double hinge_dihedral_angle(const Vec3& xv0, const Vec3& xv1, const Vec3& xwa, const Vec3& xwb);

/// Symmetrize then clamp eigenvalues to at least eps.
MatX project_pd(const MatX& block, double eps);

/// eps used by the solver: 1e-8 * max(1, ||A||_inf).
double pd_projection_eps(const MatX& block);

// --- incremental potential ---------------------------------------------------

enum class BcMode { None, Penalty };

struct IpTerms {
  double inertial = 0.0, elastic = 0.0, external = 0.0, bc = 0.0;
  double total() const { return inertial + elastic + external + bc; }
};

/// Fused value + gradient of the incremental potential, allocation-free given
/// a preallocated grad buffer (training inner loop). Pass pen_verts = nullptr
/// to skip the boundary penalty. Matches the sum of the individual energy ops.
IpTerms incremental_potential_value_grad(const SimObject& obj, const MaterialParams& params,
                                         const VecX& x, const VecX& x_prev, const VecX& x_prev2,
                                         double dt, const std::vector<int>* pen_verts,
                                         const VecX* pen_targets, double w_bc, VecX& grad);

/// Eq-of-motion objective for one implicit Euler step. Optionally adds a
/// quadratic boundary penalty (learning pipeline); the full-space simulator
/// instead eliminates Dirichlet DOFs and uses BcMode::None.
struct IncrementalPotential {
  const SimObject* obj = nullptr;
  const MaterialParams* params = nullptr;
  VecX x_prev, x_prev2;
  double dt = 1.0 / 30.0;

  BcMode bc_mode = BcMode::None;
  std::vector<int> bc_verts;
  VecX bc_targets;
  double w_bc = 1e5;

  EnergyReport eval(const VecX& x, EvalMode mode = EvalMode::WithHessian) const;
};

}  // namespace subdyn
