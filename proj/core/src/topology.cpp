#include "subdyn/topology.hpp"

#include <algorithm>
#include <map>

namespace subdyn {
namespace {

void build_rod_edges(Topology& topo) {
  topo.rod_edges.clear();
  for (const auto& strand : topo.strands)
    for (size_t i = 0; i + 1 < strand.size(); ++i)
      topo.rod_edges.push_back({strand[i], strand[i + 1]});
}

void build_hinges(Topology& topo) {
  topo.hinges.clear();
  // edge (min,max) -> (triangle, opposite vertex) pairs
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edge_map;
  for (int t = 0; t < static_cast<int>(topo.triangles.size()); ++t) {
    const auto& tri = topo.triangles[t];
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3], c = tri[(k + 2) % 3];
      edge_map[{std::min(a, b), std::max(a, b)}].push_back({t, c});
    }
  }
  for (const auto& [edge, faces] : edge_map) {
    if (faces.size() != 2) continue;
    Hinge h;
    h.v0 = edge.first;
    h.v1 = edge.second;
    h.tri_a = faces[0].first;
    h.wing_a = faces[0].second;
    h.tri_b = faces[1].first;
    h.wing_b = faces[1].second;
    topo.hinges.push_back(h);
  }
}

}  // namespace

Topology make_rod_set(int num_vertices, std::vector<std::vector<int>> strands) {
  Topology topo;
  topo.kind = TopologyKind::RodSet;
  topo.num_vertices = num_vertices;
  topo.strands = std::move(strands);
  build_rod_edges(topo);
  validate(topo);
  return topo;
}

Topology make_tri_mesh(int num_vertices, std::vector<std::array<int, 3>> triangles) {
  Topology topo;
  topo.kind = TopologyKind::TriMesh;
  topo.num_vertices = num_vertices;
  topo.triangles = std::move(triangles);
  build_hinges(topo);
  validate(topo);
  return topo;
}

Topology make_tet_mesh(int num_vertices, std::vector<std::array<int, 4>> tets) {
  Topology topo;
  topo.kind = TopologyKind::TetMesh;
  topo.num_vertices = num_vertices;
  topo.tets = std::move(tets);
  validate(topo);
  return topo;
}

void validate(const Topology& topo) {
  const int n = topo.num_vertices;
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, "topology has no vertices");

  auto check_index = [n](int v) {
    if (v < 0 || v >= n) throw Error(ErrorCode::InvalidArgument, "element index out of range");
  };

  switch (topo.kind) {
    case TopologyKind::RodSet: {
      std::vector<char> used(n, 0);
      for (const auto& strand : topo.strands) {
        if (strand.size() < 3)
          throw Error(ErrorCode::InvalidArgument, "strand shorter than 3 vertices");
        for (size_t i = 0; i < strand.size(); ++i) {
          check_index(strand[i]);
          if (used[strand[i]])
            throw Error(ErrorCode::InvalidArgument, "strands share a vertex");
          used[strand[i]] = 1;
          if (i > 0 && strand[i] != strand[i - 1] + 1)
            throw Error(ErrorCode::InvalidArgument, "strand is not a contiguous index run");
        }
      }
      for (const auto& e : topo.rod_edges)
        if (e[0] == e[1]) throw Error(ErrorCode::DegenerateElement, "repeated vertex in edge");
      break;
    }
    case TopologyKind::TriMesh: {
      for (const auto& tri : topo.triangles) {
        for (int v : tri) check_index(v);
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
          throw Error(ErrorCode::DegenerateElement, "repeated vertex in triangle");
      }
      break;
    }
    case TopologyKind::TetMesh: {
      for (const auto& tet : topo.tets) {
        for (int v : tet) check_index(v);
        for (int i = 0; i < 4; ++i)
          for (int j = i + 1; j < 4; ++j)
            if (tet[i] == tet[j])
              throw Error(ErrorCode::DegenerateElement, "repeated vertex in tet");
      }
      break;
    }
  }
}

std::vector<std::array<int, 3>> boundary_faces(const Topology& topo) {
  // Faces of each tet wound so that normals point away from the fourth vertex.
  static const int face_corners[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  std::map<std::array<int, 3>, std::array<int, 3>> counts;  // sorted key -> wound face
  std::map<std::array<int, 3>, int> multiplicity;
  for (const auto& tet : topo.tets) {
    for (const auto& fc : face_corners) {
      std::array<int, 3> face = {tet[fc[0]], tet[fc[1]], tet[fc[2]]};
      std::array<int, 3> key = face;
      std::sort(key.begin(), key.end());
      counts[key] = face;
      multiplicity[key]++;
    }
  }
  std::vector<std::array<int, 3>> result;
  for (const auto& [key, face] : counts)
    if (multiplicity[key] == 1) result.push_back(face);
  return result;
}

}  // namespace subdyn
