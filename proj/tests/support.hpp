#pragma once

#include <functional>

#include "subdyn/energy.hpp"
#include "subdyn/sim_object.hpp"

namespace subdyn::test {

inline double rel_l2(const VecX& a, const VecX& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

inline double rel_l2(const MatX& a, const MatX& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

/// Central-difference gradient of a scalar function.
inline VecX fd_gradient(const std::function<double(const VecX&)>& f, const VecX& x, double h) {
  VecX g(x.size());
  VecX xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a gradient function (dense Hessian).
inline MatX fd_hessian(const std::function<VecX(const VecX&)>& grad, const VecX& x, double h) {
  MatX hess(x.size(), x.size());
  VecX xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const VecX gp = grad(xp);
    xp[i] = xi - h;
    const VecX gm = grad(xp);
    xp[i] = xi;
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

inline MatX assemble_dense(const EnergyReport& rep, int dofs) {
  MatX h = MatX::Zero(dofs, dofs);
  for (const auto& blk : rep.element_hessians) {
    const int nv = static_cast<int>(blk.verts.size());
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b)
        h.block<3, 3>(3 * blk.verts[a], 3 * blk.verts[b]) += blk.H.block<3, 3>(3 * a, 3 * b);
  }
  return h;
}

inline VecX jitter(const VecX& x, double amp, Rng& rng) {
  VecX out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += amp * (2.0 * rng.uniform() - 1.0);
  return out;
}

// --- small fixtures ----------------------------------------------------------

inline SimObject make_rod_fixture(int strands = 3, int verts_per = 5) {
  std::vector<std::vector<int>> runs(strands);
  VecX rest(3 * strands * verts_per);
  for (int s = 0; s < strands; ++s)
    for (int k = 0; k < verts_per; ++k) {
      const int v = s * verts_per + k;
      runs[s].push_back(v);
      rest.segment<3>(3 * v) = Vec3(0.1 * s, -0.1 * k, 0.02 * s);
    }
  Topology topo = make_rod_set(strands * verts_per, runs);
  GeometryAux aux;
  aux.rod_radius = 7e-4;
  return precompute_rest(topo, rest, 1320.0, aux);
}

inline SimObject make_cloth_fixture(int nx = 4, int ny = 4) {
  VecX rest(3 * nx * ny);
  std::vector<std::array<int, 3>> tris;
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) rest.segment<3>(3 * id(i, j)) = Vec3(0.1 * i, -0.1 * j, 0.0);
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
      tris.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  Topology topo = make_tri_mesh(nx * ny, tris);
  GeometryAux aux;
  aux.shell_thickness = 0.003;
  return precompute_rest(topo, rest, 1500.0, aux);
}

inline SimObject make_two_tet_fixture() {
  VecX rest(3 * 5);
  rest.segment<3>(0) = Vec3(0, 0, 0);
  rest.segment<3>(3) = Vec3(1, 0, 0);
  rest.segment<3>(6) = Vec3(0, 1, 0);
  rest.segment<3>(9) = Vec3(0, 0, 1);
  rest.segment<3>(12) = Vec3(1, 1, 1);
  Topology topo = make_tet_mesh(5, {{0, 1, 2, 3}, {1, 2, 3, 4}});
  return precompute_rest(topo, rest, 1000.0, {});
}

inline MaterialParams default_material() {
  MaterialParams m;
  m.youngs_modulus = 1e5;
  m.poisson_ratio = 0.4;
  m.density = 1000.0;
  m.rod_radius = 7e-4;
  m.shell_thickness = 0.003;
  return m;
}

}  // namespace subdyn::test
