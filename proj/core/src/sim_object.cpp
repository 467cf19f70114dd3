#include "subdyn/sim_object.hpp"

#include <cmath>

#include "subdyn/energy.hpp"

namespace subdyn {

double bbox_diagonal(const VecX& x) {
  const int n = static_cast<int>(x.size()) / 3;
  if (n == 0) return 0.0;
  Vec3 lo = x.segment<3>(0), hi = lo;
  for (int i = 1; i < n; ++i) {
    lo = lo.cwiseMin(x.segment<3>(3 * i));
    hi = hi.cwiseMax(x.segment<3>(3 * i));
  }
  return (hi - lo).norm();
}

SimObject precompute_rest(const Topology& topology, const VecX& rest_positions, double density,
                          const GeometryAux& aux) {
  validate(topology);
  if (rest_positions.size() != topology.dof_count())
    throw Error(ErrorCode::InvalidArgument, "rest position vector length mismatch");
  if (density <= 0.0) throw Error(ErrorCode::InvalidArgument, "density must be positive");

  SimObject obj;
  obj.topology = topology;
  obj.rest.positions = rest_positions;
  obj.mass = MassVector::Zero(topology.num_vertices);
  RestState& rest = obj.rest;

  auto pos = [&](int v) -> Vec3 { return rest_positions.segment<3>(3 * v); };

  switch (topology.kind) {
    case TopologyKind::RodSet: {
      if (aux.rod_radius <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "rod radius required for RodSet");
      const double line_density = density * M_PI * aux.rod_radius * aux.rod_radius;
      rest.edge_rest_length.reserve(topology.rod_edges.size());
      for (const auto& e : topology.rod_edges) {
        double len = (pos(e[1]) - pos(e[0])).norm();
        if (len <= 0.0) throw Error(ErrorCode::DegenerateElement, "zero rest edge length");
        rest.edge_rest_length.push_back(len);
        obj.mass[e[0]] += 0.5 * line_density * len;
        obj.mass[e[1]] += 0.5 * line_density * len;
      }
      break;
    }
    case TopologyKind::TriMesh: {
      if (aux.shell_thickness <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "shell thickness required for TriMesh");
      rest.tri_rest_metric_inv.reserve(topology.triangles.size());
      rest.tri_rest_area.reserve(topology.triangles.size());
      for (const auto& tri : topology.triangles) {
        Vec3 u1 = pos(tri[1]) - pos(tri[0]);
        Vec3 u2 = pos(tri[2]) - pos(tri[0]);
        double area = 0.5 * u1.cross(u2).norm();
        if (area <= 1e-14) throw Error(ErrorCode::DegenerateElement, "zero rest triangle area");
        // rest tangent frame: t1 along u1, t2 perpendicular in plane
        Vec3 t1 = u1.normalized();
        Vec3 n = u1.cross(u2).normalized();
        Vec3 t2 = n.cross(t1);
        Eigen::Matrix2d dm;
        dm << u1.dot(t1), u2.dot(t1), 0.0, u2.dot(t2);
        rest.tri_rest_metric_inv.push_back(dm.inverse());
        rest.tri_rest_area.push_back(area);
        double tri_mass = density * aux.shell_thickness * area;
        for (int v : tri) obj.mass[v] += tri_mass / 3.0;
      }
      rest.hinge_rest_angle.reserve(topology.hinges.size());
      rest.hinge_rest_edge_len.reserve(topology.hinges.size());
      rest.hinge_rest_area.reserve(topology.hinges.size());
      for (const auto& h : topology.hinges) {
        rest.hinge_rest_angle.push_back(
            hinge_dihedral_angle(pos(h.v0), pos(h.v1), pos(h.wing_a), pos(h.wing_b)));
        rest.hinge_rest_edge_len.push_back((pos(h.v1) - pos(h.v0)).norm());
        rest.hinge_rest_area.push_back(
            (rest.tri_rest_area[h.tri_a] + rest.tri_rest_area[h.tri_b]) / 3.0);
      }
      break;
    }
    case TopologyKind::TetMesh: {
      rest.tet_rest_shape_inv.reserve(topology.tets.size());
      rest.tet_rest_volume.reserve(topology.tets.size());
      const double char_len = bbox_diagonal(rest_positions);
      const double det_floor = 1e-12 * std::max(1.0, char_len * char_len * char_len);
      for (const auto& tet : topology.tets) {
        Eigen::Matrix3d dm;
        dm.col(0) = pos(tet[1]) - pos(tet[0]);
        dm.col(1) = pos(tet[2]) - pos(tet[0]);
        dm.col(2) = pos(tet[3]) - pos(tet[0]);
        double det = dm.determinant();
        if (det <= det_floor)
          throw Error(ErrorCode::DegenerateElement, "non-positive rest tet volume");
        rest.tet_rest_shape_inv.push_back(dm.inverse());
        double vol = det / 6.0;
        rest.tet_rest_volume.push_back(vol);
        double tet_mass = density * vol;
        for (int v : tet) obj.mass[v] += tet_mass / 4.0;
      }
      break;
    }
  }

  for (int i = 0; i < topology.num_vertices; ++i)
    if (obj.mass[i] <= 0.0)
      throw Error(ErrorCode::DegenerateElement, "vertex with non-positive lumped mass");
  return obj;
}

}  // namespace subdyn
