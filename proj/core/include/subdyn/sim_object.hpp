#pragma once

#include <vector>

#include "subdyn/topology.hpp"

namespace subdyn {

/// Rest-state quantities precomputed per element kind.
struct RestState {
  VecX positions;  // 3N

  // rods
  std::vector<double> edge_rest_length;  // aligned with topology.rod_edges

  // shells
  std::vector<Eigen::Matrix2d> tri_rest_metric_inv;  // Dm^-1 in the rest tangent frame
  std::vector<double> tri_rest_area;
  std::vector<double> hinge_rest_angle;
  std::vector<double> hinge_rest_edge_len;
  std::vector<double> hinge_rest_area;  // one third of the two incident rest areas

  // tets
  std::vector<Eigen::Matrix3d> tet_rest_shape_inv;
  std::vector<double> tet_rest_volume;
};

using MassVector = VecX;  // per-vertex lumped mass, kg

/// Cross-section / thickness inputs for rest precomputation.
struct GeometryAux {
  double rod_radius = 0.0;
  double shell_thickness = 0.0;
};

struct SimObject {
  Topology topology;
  RestState rest;
  MassVector mass;  // length N
};

/// Rest lengths/areas/volumes/metrics plus lumped masses. Element mass is
/// split equally among its vertices; rod vertex mass is
/// density*pi*r^2*(sum of adjacent rest lengths)/2.
/// Throws DegenerateElement if any rest measure is non-positive.
SimObject precompute_rest(const Topology& topology, const VecX& rest_positions, double density,
                          const GeometryAux& aux);

/// Axis-aligned bounding box diagonal of a flat position vector.
double bbox_diagonal(const VecX& x);

}  // namespace subdyn
