#pragma once

#include <array>
#include <vector>

#include "subdyn/common.hpp"

namespace subdyn {

enum class TopologyKind { RodSet, TriMesh, TetMesh };

/// Hinge over an interior edge: (v0, v1) shared edge, (wing_a, wing_b) the
/// opposite vertices of the two incident triangles.
struct Hinge {
  int v0, v1, wing_a, wing_b;
  int tri_a, tri_b;
};

/// Mesh connectivity. Immutable after construction; derived element lists
/// (rod edges, hinges) are built once by the factory functions.
struct Topology {
  TopologyKind kind = TopologyKind::RodSet;
  int num_vertices = 0;

  // RodSet: disjoint contiguous vertex index runs, one per strand.
  std::vector<std::vector<int>> strands;
  std::vector<std::array<int, 2>> rod_edges;  // derived, strand order

  // TriMesh
  std::vector<std::array<int, 3>> triangles;
  std::vector<Hinge> hinges;  // derived, interior edges only

  // TetMesh
  std::vector<std::array<int, 4>> tets;

  int dof_count() const { return 3 * num_vertices; }
};

Topology make_rod_set(int num_vertices, std::vector<std::vector<int>> strands);
Topology make_tri_mesh(int num_vertices, std::vector<std::array<int, 3>> triangles);
Topology make_tet_mesh(int num_vertices, std::vector<std::array<int, 4>> tets);

/// Throws InvalidArgument / DegenerateElement on out-of-range indices,
/// repeated indices within an element, overlapping strands, or strands
/// shorter than 3 vertices.
void validate(const Topology& topo);

/// Boundary triangles of a tet mesh (faces referenced by exactly one tet),
/// wound facing outward.
std::vector<std::array<int, 3>> boundary_faces(const Topology& topo);

}  // namespace subdyn
