#include "subdyn/energy.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace subdyn {
namespace {

std::atomic<uint64_t> g_eval_count{0};

inline void count_eval() { g_eval_count.fetch_add(1, std::memory_order_relaxed); }

inline void symmetrize(MatX& h) { h = 0.5 * (h + h.transpose()).eval(); }

inline bool want_grad(EvalMode m) { return m != EvalMode::ValueOnly; }
inline bool want_hess(EvalMode m) { return m == EvalMode::WithHessian; }

}  // namespace

uint64_t energy_eval_count() { return g_eval_count.load(std::memory_order_relaxed); }

void EnergyReport::add(const EnergyReport& other) {
  value += other.value;
  if (other.gradient.size()) {
    if (!gradient.size())
      gradient = other.gradient;
    else
      gradient += other.gradient;
  }
  element_hessians.insert(element_hessians.end(), other.element_hessians.begin(),
                          other.element_hessians.end());
}

EnergyReport inertial_energy(const VecX& x, const VecX& x_prev, const VecX& x_prev2,
                             const MassVector& mass, double dt, EvalMode mode) {
  count_eval();
  if (x.size() != x_prev.size() || x.size() != x_prev2.size() || x.size() != 3 * mass.size())
    throw Error(ErrorCode::LengthMismatch, "inertial_energy inputs");
  if (dt <= 0.0) throw Error(ErrorCode::InvalidArgument, "dt must be positive");

  const int n = static_cast<int>(mass.size());
  const double inv_dt2 = 1.0 / (dt * dt);
  EnergyReport rep;
  if (want_grad(mode)) rep.gradient = VecX::Zero(x.size());

  VecX d = x - (2.0 * x_prev - x_prev2);
  for (int i = 0; i < n; ++i) {
    const double m = mass[i];
    rep.value += 0.5 * inv_dt2 * m * d.segment<3>(3 * i).squaredNorm();
    if (want_grad(mode)) rep.gradient.segment<3>(3 * i) = m * inv_dt2 * d.segment<3>(3 * i);
    if (want_hess(mode)) {
      ElementBlock blk;
      blk.verts = {i};
      blk.H = m * inv_dt2 * Eigen::Matrix3d::Identity();
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

EnergyReport gravity_energy(const VecX& x, const MassVector& mass, const Vec3& g, EvalMode mode) {
  count_eval();
  if (x.size() != 3 * mass.size()) throw Error(ErrorCode::LengthMismatch, "gravity_energy inputs");
  const int n = static_cast<int>(mass.size());
  EnergyReport rep;
  if (want_grad(mode)) rep.gradient = VecX::Zero(x.size());
  for (int i = 0; i < n; ++i) {
    rep.value -= mass[i] * g.dot(x.segment<3>(3 * i));
    if (want_grad(mode)) rep.gradient.segment<3>(3 * i) = -mass[i] * g;
  }
  return rep;
}

EnergyReport rod_stretch_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                const MaterialParams& params, EvalMode mode) {
  count_eval();
  const double ks = params.rod_stretch_stiffness();
  EnergyReport rep(topo.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);

  for (size_t e = 0; e < topo.rod_edges.size(); ++e) {
    const int i = topo.rod_edges[e][0], j = topo.rod_edges[e][1];
    const Vec3 ev = x.segment<3>(3 * j) - x.segment<3>(3 * i);
    const double l = ev.norm();
    if (l < 1e-12) throw Error(ErrorCode::ZeroLengthEdge, "edge " + std::to_string(e));
    const double rl = rest.edge_rest_length[e];
    const double s = l / rl - 1.0;
    rep.value += 0.5 * ks * s * s * rl;
    if (!want_grad(mode)) continue;

    const Vec3 u = ev / l;
    const Vec3 f = ks * s * u;  // dE/dx_j
    rep.gradient.segment<3>(3 * j) += f;
    rep.gradient.segment<3>(3 * i) -= f;

    if (want_hess(mode)) {
      Eigen::Matrix3d uu = u * u.transpose();
      Eigen::Matrix3d hee =
          (ks / rl) * uu + (ks * s / l) * (Eigen::Matrix3d::Identity() - uu);
      ElementBlock blk;
      blk.verts = {i, j};
      blk.H.setZero(6, 6);
      blk.H.block<3, 3>(0, 0) = hee;
      blk.H.block<3, 3>(3, 3) = hee;
      blk.H.block<3, 3>(0, 3) = -hee;
      blk.H.block<3, 3>(3, 0) = -hee;
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

EnergyReport rod_bend_energy(const VecX& x, const Topology& topo, const RestState& rest,
                             const MaterialParams& params, EvalMode mode) {
  count_eval();
  const double kb = params.rod_bend_stiffness();
  EnergyReport rep(topo.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);

  size_t edge_base = 0;
  for (const auto& strand : topo.strands) {
    const int segs = static_cast<int>(strand.size()) - 1;
    for (int k = 1; k < segs; ++k) {
      const int va = strand[k - 1], vb = strand[k], vc = strand[k + 1];
      const Vec3 e0 = x.segment<3>(3 * vb) - x.segment<3>(3 * va);
      const Vec3 e1 = x.segment<3>(3 * vc) - x.segment<3>(3 * vb);
      const double r0 = rest.edge_rest_length[edge_base + k - 1];
      const double r1 = rest.edge_rest_length[edge_base + k];
      // current lengths in the denominator keep the binormal well defined
      // under large stretch; coincides with the rest-length form when edges
      // are near rest length
      const double l0 = e0.norm(), l1 = e1.norm();
      const double denom = l0 * l1 + e0.dot(e1);
      if (denom < 1e-12 * std::max(1.0, l0 * l1))
        throw Error(ErrorCode::AntiparallelEdges, "vertex " + std::to_string(vb));
      const Vec3 kappa = 2.0 * e0.cross(e1) / denom;
      const double lbar = 0.5 * (r0 + r1);
      const double coef = kb / lbar;
      rep.value += coef * kappa.squaredNorm();
      if (!want_grad(mode)) continue;

      // J = d kappa / d(xa, xb, xc), built column-wise from directional derivatives
      Eigen::Matrix<double, 3, 9> jac;
      for (int c = 0; c < 9; ++c) {
        Vec3 dxa = Vec3::Zero(), dxb = Vec3::Zero(), dxc = Vec3::Zero();
        if (c < 3) dxa[c] = 1.0;
        else if (c < 6) dxb[c - 3] = 1.0;
        else dxc[c - 6] = 1.0;
        const Vec3 de0 = dxb - dxa;
        const Vec3 de1 = dxc - dxb;
        const double dd = e0.dot(de0) / l0 * l1 + l0 * e1.dot(de1) / l1 +
                          de0.dot(e1) + e0.dot(de1);
        jac.col(c) = (2.0 * (de0.cross(e1) + e0.cross(de1)) - kappa * dd) / denom;
      }
      Eigen::Matrix<double, 9, 1> grad = 2.0 * coef * jac.transpose() * kappa;
      rep.gradient.segment<3>(3 * va) += grad.segment<3>(0);
      rep.gradient.segment<3>(3 * vb) += grad.segment<3>(3);
      rep.gradient.segment<3>(3 * vc) += grad.segment<3>(6);

      if (want_hess(mode)) {
        // Gauss-Newton block: PSD by construction.
        ElementBlock blk;
        blk.verts = {va, vb, vc};
        blk.H = 2.0 * coef * (jac.transpose() * jac);
        symmetrize(blk.H);
        rep.element_hessians.push_back(std::move(blk));
      }
    }
    edge_base += segs;
  }
  return rep;
}

EnergyReport shell_membrane_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                   const MaterialParams& params, EvalMode mode) {
  count_eval();
  const double mu = params.mu(), lambda = params.lambda();
  const double h = params.shell_thickness;
  EnergyReport rep(topo.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);

  for (size_t t = 0; t < topo.triangles.size(); ++t) {
    const auto& tri = topo.triangles[t];
    const double area = rest.tri_rest_area[t];
    if (area <= 1e-14) throw Error(ErrorCode::DegenerateTriangle, "triangle " + std::to_string(t));
    const Eigen::Matrix2d& bm = rest.tri_rest_metric_inv[t];

    Eigen::Matrix<double, 3, 2> ds;
    ds.col(0) = x.segment<3>(3 * tri[1]) - x.segment<3>(3 * tri[0]);
    ds.col(1) = x.segment<3>(3 * tri[2]) - x.segment<3>(3 * tri[0]);
    const Eigen::Matrix<double, 3, 2> f = ds * bm;
    const Eigen::Matrix2d eps = 0.5 * (f.transpose() * f - Eigen::Matrix2d::Identity());
    const double tr = eps.trace();
    const double coef = area * h;
    rep.value += coef * (mu * eps.squaredNorm() + 0.5 * lambda * tr * tr);
    if (!want_grad(mode)) continue;

    const Eigen::Matrix2d s2 = 2.0 * mu * eps + lambda * tr * Eigen::Matrix2d::Identity();
    const Eigen::Matrix<double, 3, 2> g_ds = coef * (f * s2) * bm.transpose();
    rep.gradient.segment<3>(3 * tri[1]) += g_ds.col(0);
    rep.gradient.segment<3>(3 * tri[2]) += g_ds.col(1);
    rep.gradient.segment<3>(3 * tri[0]) -= g_ds.col(0) + g_ds.col(1);

    if (want_hess(mode)) {
      // exact Hessian via directional derivatives of the stress
      ElementBlock blk;
      blk.verts = {tri[0], tri[1], tri[2]};
      blk.H.setZero(9, 9);
      for (int c = 0; c < 9; ++c) {
        Eigen::Matrix<double, 3, 2> dds = Eigen::Matrix<double, 3, 2>::Zero();
        const int v = c / 3, r = c % 3;
        if (v == 0) {
          dds(r, 0) -= 1.0;
          dds(r, 1) -= 1.0;
        } else {
          dds(r, v - 1) += 1.0;
        }
        const Eigen::Matrix<double, 3, 2> df = dds * bm;
        const Eigen::Matrix2d deps = 0.5 * (df.transpose() * f + f.transpose() * df);
        const Eigen::Matrix2d ds2 =
            2.0 * mu * deps + lambda * deps.trace() * Eigen::Matrix2d::Identity();
        const Eigen::Matrix<double, 3, 2> dg = coef * (df * s2 + f * ds2) * bm.transpose();
        blk.H.block<3, 1>(3, c) = dg.col(0);
        blk.H.block<3, 1>(6, c) = dg.col(1);
        blk.H.block<3, 1>(0, c) = -dg.col(0) - dg.col(1);
      }
      symmetrize(blk.H);
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

double hinge_dihedral_angle(const Vec3& xv0, const Vec3& xv1, const Vec3& xwa, const Vec3& xwb) {
  const Vec3 e0 = xv1 - xv0;
  const Vec3 na = e0.cross(xwa - xv1);
  const Vec3 nb = -e0.cross(xwb - xv1);
  const double la = na.norm(), lb = nb.norm(), le = e0.norm();
  if (la < 1e-14 || lb < 1e-14 || le < 1e-14)
    throw Error(ErrorCode::DegenerateHinge, "degenerate hinge triangle");
  const Vec3 nah = na / la, nbh = nb / lb;
  return std::atan2(nah.cross(nbh).dot(e0 / le), nah.dot(nbh));
}

namespace {

// Gradient of the dihedral angle w.r.t. the stencil (v0, v1, wing_a, wing_b),
// plus every intermediate needed for the exact Hessian.
struct HingeGeom {
  Vec3 e0, e1, e2, te1, te2;  // e1,e2 to wing_a; te1,te2 to wing_b
  Vec3 nu, tnu;               // unnormalized normals
  double l0, nn, tn;          // |e0|, |nu|^2, |tnu|^2
  double theta;
  Eigen::Matrix<double, 12, 1> dtheta;  // order: v0, v1, wa, wb
};

HingeGeom hinge_geometry(const Vec3& xv0, const Vec3& xv1, const Vec3& xwa, const Vec3& xwb) {
  HingeGeom g;
  g.e0 = xv1 - xv0;
  g.e1 = xwa - xv1;
  g.e2 = xwa - xv0;
  g.te1 = xwb - xv1;
  g.te2 = xwb - xv0;
  g.nu = g.e0.cross(g.e1);
  g.tnu = -g.e0.cross(g.te1);
  g.l0 = g.e0.norm();
  g.nn = g.nu.squaredNorm();
  g.tn = g.tnu.squaredNorm();
  if (g.nn < 1e-24 || g.tn < 1e-24 || g.l0 < 1e-12)
    throw Error(ErrorCode::DegenerateHinge, "degenerate hinge triangle");
  const Vec3 nah = g.nu / std::sqrt(g.nn), nbh = g.tnu / std::sqrt(g.tn);
  g.theta = std::atan2(nah.cross(nbh).dot(g.e0 / g.l0), nah.dot(nbh));

  const Vec3 e0h = g.e0 / g.l0;
  const Vec3 ga = -g.l0 / g.nn * g.nu;
  const Vec3 gb = -g.l0 / g.tn * g.tnu;
  const Vec3 g0 = (-e0h.dot(g.e1)) / g.nn * g.nu + (-e0h.dot(g.te1)) / g.tn * g.tnu;
  const Vec3 g1 = (e0h.dot(g.e2)) / g.nn * g.nu + (e0h.dot(g.te2)) / g.tn * g.tnu;
  g.dtheta.segment<3>(0) = g0;
  g.dtheta.segment<3>(3) = g1;
  g.dtheta.segment<3>(6) = ga;
  g.dtheta.segment<3>(9) = gb;
  return g;
}

// Exact d^2(theta)/dx^2 via directional derivatives of the gradient formula.
Eigen::Matrix<double, 12, 12> hinge_angle_hessian(const HingeGeom& g) {
  Eigen::Matrix<double, 12, 12> h;
  const Vec3 e0h = g.e0 / g.l0;
  for (int c = 0; c < 12; ++c) {
    Vec3 dv0 = Vec3::Zero(), dv1 = Vec3::Zero(), dwa = Vec3::Zero(), dwb = Vec3::Zero();
    (c < 3 ? dv0 : c < 6 ? dv1 : c < 9 ? dwa : dwb)[c % 3] = 1.0;

    const Vec3 de0 = dv1 - dv0;
    const Vec3 de1 = dwa - dv1;
    const Vec3 de2 = dwa - dv0;
    const Vec3 dte1 = dwb - dv1;
    const Vec3 dte2 = dwb - dv0;
    const Vec3 dnu = de0.cross(g.e1) + g.e0.cross(de1);
    const Vec3 dtnu = -(de0.cross(g.te1) + g.e0.cross(dte1));
    const double dl0 = e0h.dot(de0);
    const double dnn = 2.0 * g.nu.dot(dnu);
    const double dtn = 2.0 * g.tnu.dot(dtnu);
    const Vec3 de0h = (de0 - e0h * dl0) / g.l0;

    // d(nu/nn) and d(tnu/tn)
    const Vec3 dnu_nn = dnu / g.nn - g.nu * (dnn / (g.nn * g.nn));
    const Vec3 dtnu_tn = dtnu / g.tn - g.tnu * (dtn / (g.tn * g.tn));

    const Vec3 dga = -(dl0 * g.nu / g.nn + g.l0 * dnu_nn);
    const Vec3 dgb = -(dl0 * g.tnu / g.tn + g.l0 * dtnu_tn);

    const double ca = -e0h.dot(g.e1), cta = -e0h.dot(g.te1);
    const double dca = -(de0h.dot(g.e1) + e0h.dot(de1));
    const double dcta = -(de0h.dot(g.te1) + e0h.dot(dte1));
    const Vec3 dg0 = dca * g.nu / g.nn + ca * dnu_nn + dcta * g.tnu / g.tn + cta * dtnu_tn;

    const double cb = e0h.dot(g.e2), ctb = e0h.dot(g.te2);
    const double dcb = de0h.dot(g.e2) + e0h.dot(de2);
    const double dctb = de0h.dot(g.te2) + e0h.dot(dte2);
    const Vec3 dg1 = dcb * g.nu / g.nn + cb * dnu_nn + dctb * g.tnu / g.tn + ctb * dtnu_tn;

    h.block<3, 1>(0, c) = dg0;
    h.block<3, 1>(3, c) = dg1;
    h.block<3, 1>(6, c) = dga;
    h.block<3, 1>(9, c) = dgb;
  }
  return 0.5 * (h + h.transpose()).eval();
}

}  // namespace

EnergyReport shell_hinge_bend_energy(const VecX& x, const Topology& topo, const RestState& rest,
                                     const MaterialParams& params, EvalMode mode) {
  count_eval();
  const double k = params.hinge_stiffness();
  EnergyReport rep(topo.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);

  for (size_t hi = 0; hi < topo.hinges.size(); ++hi) {
    const Hinge& hg = topo.hinges[hi];
    const Vec3 xv0 = x.segment<3>(3 * hg.v0), xv1 = x.segment<3>(3 * hg.v1);
    const Vec3 xwa = x.segment<3>(3 * hg.wing_a), xwb = x.segment<3>(3 * hg.wing_b);
    const double rl = rest.hinge_rest_edge_len[hi];
    const double coef = k * rl * rl / rest.hinge_rest_area[hi];
    const double theta_bar = rest.hinge_rest_angle[hi];

    if (!want_grad(mode)) {
      const double theta = hinge_dihedral_angle(xv0, xv1, xwa, xwb);
      const double d = theta - theta_bar;
      rep.value += coef * d * d;
      continue;
    }

    const HingeGeom g = hinge_geometry(xv0, xv1, xwa, xwb);
    const double d = g.theta - theta_bar;
    rep.value += coef * d * d;
    const Eigen::Matrix<double, 12, 1> grad = 2.0 * coef * d * g.dtheta;
    rep.gradient.segment<3>(3 * hg.v0) += grad.segment<3>(0);
    rep.gradient.segment<3>(3 * hg.v1) += grad.segment<3>(3);
    rep.gradient.segment<3>(3 * hg.wing_a) += grad.segment<3>(6);
    rep.gradient.segment<3>(3 * hg.wing_b) += grad.segment<3>(9);

    if (want_hess(mode)) {
      ElementBlock blk;
      blk.verts = {hg.v0, hg.v1, hg.wing_a, hg.wing_b};
      blk.H = 2.0 * coef * (g.dtheta * g.dtheta.transpose() + d * hinge_angle_hessian(g));
      symmetrize(blk.H);
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

EnergyReport tet_stvk_energy(const VecX& x, const Topology& topo, const RestState& rest,
                             const MaterialParams& params, EvalMode mode) {
  count_eval();
  const double mu = params.mu(), lambda = params.lambda();
  EnergyReport rep(topo.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);

  for (size_t t = 0; t < topo.tets.size(); ++t) {
    const auto& tet = topo.tets[t];
    const Eigen::Matrix3d& bm = rest.tet_rest_shape_inv[t];
    const double vol = rest.tet_rest_volume[t];

    Eigen::Matrix3d ds;
    ds.col(0) = x.segment<3>(3 * tet[1]) - x.segment<3>(3 * tet[0]);
    ds.col(1) = x.segment<3>(3 * tet[2]) - x.segment<3>(3 * tet[0]);
    ds.col(2) = x.segment<3>(3 * tet[3]) - x.segment<3>(3 * tet[0]);
    const Eigen::Matrix3d f = ds * bm;
    const Eigen::Matrix3d eg = 0.5 * (f.transpose() * f - Eigen::Matrix3d::Identity());
    const double tr = eg.trace();
    rep.value += vol * (mu * eg.squaredNorm() + 0.5 * lambda * tr * tr);
    if (!want_grad(mode)) continue;

    const Eigen::Matrix3d s2 = 2.0 * mu * eg + lambda * tr * Eigen::Matrix3d::Identity();
    const Eigen::Matrix3d g_ds = vol * (f * s2) * bm.transpose();
    rep.gradient.segment<3>(3 * tet[1]) += g_ds.col(0);
    rep.gradient.segment<3>(3 * tet[2]) += g_ds.col(1);
    rep.gradient.segment<3>(3 * tet[3]) += g_ds.col(2);
    rep.gradient.segment<3>(3 * tet[0]) -= g_ds.col(0) + g_ds.col(1) + g_ds.col(2);

    if (want_hess(mode)) {
      ElementBlock blk;
      blk.verts = {tet[0], tet[1], tet[2], tet[3]};
      blk.H.setZero(12, 12);
      for (int c = 0; c < 12; ++c) {
        Eigen::Matrix3d dds = Eigen::Matrix3d::Zero();
        const int v = c / 3, r = c % 3;
        if (v == 0) {
          dds.row(r).array() -= 1.0;
        } else {
          dds(r, v - 1) += 1.0;
        }
        const Eigen::Matrix3d df = dds * bm;
        const Eigen::Matrix3d deg = 0.5 * (df.transpose() * f + f.transpose() * df);
        const Eigen::Matrix3d ds2 =
            2.0 * mu * deg + lambda * deg.trace() * Eigen::Matrix3d::Identity();
        const Eigen::Matrix3d dg = vol * (df * s2 + f * ds2) * bm.transpose();
        blk.H.block<3, 1>(3, c) = dg.col(0);
        blk.H.block<3, 1>(6, c) = dg.col(1);
        blk.H.block<3, 1>(9, c) = dg.col(2);
        blk.H.block<3, 1>(0, c) = -(dg.col(0) + dg.col(1) + dg.col(2));
      }
      symmetrize(blk.H);
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

EnergyReport bc_penalty_energy(const VecX& x, const std::vector<int>& verts, const VecX& targets,
                               double w_bc, EvalMode mode) {
  count_eval();
  if (targets.size() != 3 * static_cast<int>(verts.size()))
    throw Error(ErrorCode::LengthMismatch, "bc_penalty_energy targets");
  if (w_bc <= 0.0) throw Error(ErrorCode::InvalidArgument, "w_bc must be positive");

  EnergyReport rep;
  if (want_grad(mode)) rep.gradient = VecX::Zero(x.size());
  for (size_t k = 0; k < verts.size(); ++k) {
    const int v = verts[k];
    const Vec3 d = x.segment<3>(3 * v) - targets.segment<3>(3 * k);
    rep.value += w_bc * d.squaredNorm();
    if (want_grad(mode)) rep.gradient.segment<3>(3 * v) += 2.0 * w_bc * d;
    if (want_hess(mode)) {
      ElementBlock blk;
      blk.verts = {v};
      blk.H = 2.0 * w_bc * Eigen::Matrix3d::Identity();
      rep.element_hessians.push_back(std::move(blk));
    }
  }
  return rep;
}

EnergyReport elastic_energy(const VecX& x, const SimObject& obj, const MaterialParams& params,
                            EvalMode mode) {
  EnergyReport rep(obj.topology.dof_count());
  if (!want_grad(mode)) rep.gradient.resize(0);
  switch (obj.topology.kind) {
    case TopologyKind::RodSet:
      rep.add(rod_stretch_energy(x, obj.topology, obj.rest, params, mode));
      rep.add(rod_bend_energy(x, obj.topology, obj.rest, params, mode));
      break;
    case TopologyKind::TriMesh:
      rep.add(shell_membrane_energy(x, obj.topology, obj.rest, params, mode));
      rep.add(shell_hinge_bend_energy(x, obj.topology, obj.rest, params, mode));
      break;
    case TopologyKind::TetMesh:
      rep.add(tet_stvk_energy(x, obj.topology, obj.rest, params, mode));
      break;
  }
  return rep;
}

double pd_projection_eps(const MatX& block) {
  const double norm_inf = block.cwiseAbs().rowwise().sum().maxCoeff();
  return 1e-8 * std::max(1.0, norm_inf);
}

MatX project_pd(const MatX& block, double eps) {
  MatX sym = 0.5 * (block + block.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> eig(sym);
  if (eig.eigenvalues().minCoeff() >= eps) return sym;
  VecX vals = eig.eigenvalues().cwiseMax(eps);
  MatX out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

IpTerms incremental_potential_value_grad(const SimObject& obj, const MaterialParams& params,
                                         const VecX& x, const VecX& x_prev, const VecX& x_prev2,
                                         double dt, const std::vector<int>* pen_verts,
                                         const VecX* pen_targets, double w_bc, VecX& grad) {
  count_eval();
  IpTerms terms;
  const int n = obj.topology.num_vertices;
  grad.setZero(3 * n);

  // inertial + gravity per vertex
  const double inv_dt2 = 1.0 / (dt * dt);
  const Vec3& g = params.gravity;
  for (int i = 0; i < n; ++i) {
    const double m = obj.mass[i];
    const Vec3 d = x.segment<3>(3 * i) -
                   (2.0 * x_prev.segment<3>(3 * i) - x_prev2.segment<3>(3 * i));
    terms.inertial += 0.5 * inv_dt2 * m * d.squaredNorm();
    terms.external -= m * g.dot(x.segment<3>(3 * i));
    grad.segment<3>(3 * i) += m * inv_dt2 * d - m * g;
  }

  const Topology& topo = obj.topology;
  const RestState& rest = obj.rest;
  switch (topo.kind) {
    case TopologyKind::RodSet: {
      const double ks = params.rod_stretch_stiffness();
      for (size_t e = 0; e < topo.rod_edges.size(); ++e) {
        const int i = topo.rod_edges[e][0], j = topo.rod_edges[e][1];
        const Vec3 ev = x.segment<3>(3 * j) - x.segment<3>(3 * i);
        const double l = ev.norm();
        if (l < 1e-12) throw Error(ErrorCode::ZeroLengthEdge, "edge " + std::to_string(e));
        const double rl = rest.edge_rest_length[e];
        const double s = l / rl - 1.0;
        terms.elastic += 0.5 * ks * s * s * rl;
        const Vec3 f = (ks * s / l) * ev;
        grad.segment<3>(3 * j) += f;
        grad.segment<3>(3 * i) -= f;
      }
      const double kb = params.rod_bend_stiffness();
      size_t edge_base = 0;
      for (const auto& strand : topo.strands) {
        const int segs = static_cast<int>(strand.size()) - 1;
        for (int k = 1; k < segs; ++k) {
          const int va = strand[k - 1], vb = strand[k], vc = strand[k + 1];
          const Vec3 e0 = x.segment<3>(3 * vb) - x.segment<3>(3 * va);
          const Vec3 e1 = x.segment<3>(3 * vc) - x.segment<3>(3 * vb);
          const double l0 = e0.norm(), l1 = e1.norm();
          const double denom = l0 * l1 + e0.dot(e1);
          if (denom < 1e-12 * std::max(1.0, l0 * l1))
            throw Error(ErrorCode::AntiparallelEdges, "vertex " + std::to_string(vb));
          const Vec3 kappa = 2.0 * e0.cross(e1) / denom;
          const double r0 = rest.edge_rest_length[edge_base + k - 1];
          const double r1 = rest.edge_rest_length[edge_base + k];
          const double coef = kb / (0.5 * (r0 + r1));
          terms.elastic += coef * kappa.squaredNorm();
          const Vec3 w = (2.0 * coef) * kappa;  // dE/dkappa
          // triple products: w.(de0 x e1) = de0.(e1 x w), w.(e0 x de1) = de1.(w x e0)
          const Vec3 e1w = e1.cross(w), we0 = w.cross(e0);
          const double wk = w.dot(kappa);
          const Vec3 dden_de0 = (l1 / l0) * e0 + e1;
          const Vec3 dden_de1 = (l0 / l1) * e1 + e0;
          const Vec3 g_e0 = (2.0 * e1w - wk * dden_de0) / denom;
          const Vec3 g_e1 = (2.0 * we0 - wk * dden_de1) / denom;
          grad.segment<3>(3 * va) -= g_e0;
          grad.segment<3>(3 * vb) += g_e0 - g_e1;
          grad.segment<3>(3 * vc) += g_e1;
        }
        edge_base += segs;
      }
      break;
    }
    case TopologyKind::TriMesh: {
      const double mu = params.mu(), lambda = params.lambda();
      const double h = params.shell_thickness;
      for (size_t t = 0; t < topo.triangles.size(); ++t) {
        const auto& tri = topo.triangles[t];
        const Eigen::Matrix2d& bm = rest.tri_rest_metric_inv[t];
        Eigen::Matrix<double, 3, 2> ds;
        ds.col(0) = x.segment<3>(3 * tri[1]) - x.segment<3>(3 * tri[0]);
        ds.col(1) = x.segment<3>(3 * tri[2]) - x.segment<3>(3 * tri[0]);
        const Eigen::Matrix<double, 3, 2> f = ds * bm;
        const Eigen::Matrix2d eps = 0.5 * (f.transpose() * f - Eigen::Matrix2d::Identity());
        const double tr = eps.trace();
        const double coef = rest.tri_rest_area[t] * h;
        terms.elastic += coef * (mu * eps.squaredNorm() + 0.5 * lambda * tr * tr);
        const Eigen::Matrix2d s2 = 2.0 * mu * eps + lambda * tr * Eigen::Matrix2d::Identity();
        const Eigen::Matrix<double, 3, 2> g_ds = coef * (f * s2) * bm.transpose();
        grad.segment<3>(3 * tri[1]) += g_ds.col(0);
        grad.segment<3>(3 * tri[2]) += g_ds.col(1);
        grad.segment<3>(3 * tri[0]) -= g_ds.col(0) + g_ds.col(1);
      }
      const double kh = params.hinge_stiffness();
      for (size_t hi = 0; hi < topo.hinges.size(); ++hi) {
        const Hinge& hg = topo.hinges[hi];
        const HingeGeom geom =
            hinge_geometry(x.segment<3>(3 * hg.v0), x.segment<3>(3 * hg.v1),
                           x.segment<3>(3 * hg.wing_a), x.segment<3>(3 * hg.wing_b));
        const double rl = rest.hinge_rest_edge_len[hi];
        const double coef = kh * rl * rl / rest.hinge_rest_area[hi];
        const double d = geom.theta - rest.hinge_rest_angle[hi];
        terms.elastic += coef * d * d;
        const Eigen::Matrix<double, 12, 1> gth = (2.0 * coef * d) * geom.dtheta;
        grad.segment<3>(3 * hg.v0) += gth.segment<3>(0);
        grad.segment<3>(3 * hg.v1) += gth.segment<3>(3);
        grad.segment<3>(3 * hg.wing_a) += gth.segment<3>(6);
        grad.segment<3>(3 * hg.wing_b) += gth.segment<3>(9);
      }
      break;
    }
    case TopologyKind::TetMesh: {
      const double mu = params.mu(), lambda = params.lambda();
      for (size_t t = 0; t < topo.tets.size(); ++t) {
        const auto& tet = topo.tets[t];
        const Eigen::Matrix3d& bm = rest.tet_rest_shape_inv[t];
        Eigen::Matrix3d ds;
        ds.col(0) = x.segment<3>(3 * tet[1]) - x.segment<3>(3 * tet[0]);
        ds.col(1) = x.segment<3>(3 * tet[2]) - x.segment<3>(3 * tet[0]);
        ds.col(2) = x.segment<3>(3 * tet[3]) - x.segment<3>(3 * tet[0]);
        const Eigen::Matrix3d f = ds * bm;
        const Eigen::Matrix3d eg = 0.5 * (f.transpose() * f - Eigen::Matrix3d::Identity());
        const double tr = eg.trace();
        const double vol = rest.tet_rest_volume[t];
        terms.elastic += vol * (mu * eg.squaredNorm() + 0.5 * lambda * tr * tr);
        const Eigen::Matrix3d s2 = 2.0 * mu * eg + lambda * tr * Eigen::Matrix3d::Identity();
        const Eigen::Matrix3d g_ds = vol * (f * s2) * bm.transpose();
        grad.segment<3>(3 * tet[1]) += g_ds.col(0);
        grad.segment<3>(3 * tet[2]) += g_ds.col(1);
        grad.segment<3>(3 * tet[3]) += g_ds.col(2);
        grad.segment<3>(3 * tet[0]) -= g_ds.col(0) + g_ds.col(1) + g_ds.col(2);
      }
      break;
    }
  }

  if (pen_verts && pen_targets) {
    for (size_t k = 0; k < pen_verts->size(); ++k) {
      const int v = (*pen_verts)[k];
      const Vec3 d = x.segment<3>(3 * v) - pen_targets->segment<3>(3 * k);
      terms.bc += w_bc * d.squaredNorm();
      grad.segment<3>(3 * v) += 2.0 * w_bc * d;
    }
  }
  return terms;
}

EnergyReport IncrementalPotential::eval(const VecX& x, EvalMode mode) const {
  EnergyReport rep = inertial_energy(x, x_prev, x_prev2, obj->mass, dt, mode);
  rep.add(elastic_energy(x, *obj, *params, mode));
  rep.add(gravity_energy(x, obj->mass, params->gravity, mode));
  if (bc_mode == BcMode::Penalty && !bc_verts.empty())
    rep.add(bc_penalty_energy(x, bc_verts, bc_targets, w_bc, mode));
  return rep;
}

}  // namespace subdyn
