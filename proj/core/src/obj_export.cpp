#include <cinttypes>
#include <cstdio>
#include <filesystem>

#include "subdyn/rollout.hpp"

namespace subdyn {

int export_obj_sequence(const std::vector<VecX>& frames, const Topology& topo,
                        const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory: " + dir);

  const auto faces = topo.kind == TopologyKind::TetMesh ? boundary_faces(topo)
                                                        : std::vector<std::array<int, 3>>{};
  int count = 0;
  for (size_t t = 0; t < frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.obj", t);
    const std::string path = dir + "/" + name;
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(ErrorCode::IoError, "cannot open for write: " + path);

    const VecX& x = frames[t];
    for (int v = 0; v < topo.num_vertices; ++v)
      std::fprintf(f, "v %.9g %.9g %.9g\n", x[3 * v], x[3 * v + 1], x[3 * v + 2]);

    switch (topo.kind) {
      case TopologyKind::RodSet:
        for (const auto& strand : topo.strands) {
          std::fprintf(f, "l");
          for (int v : strand) std::fprintf(f, " %d", v + 1);
          std::fprintf(f, "\n");
        }
        break;
      case TopologyKind::TriMesh:
        for (const auto& tri : topo.triangles)
          std::fprintf(f, "f %d %d %d\n", tri[0] + 1, tri[1] + 1, tri[2] + 1);
        break;
      case TopologyKind::TetMesh:
        for (const auto& face : faces)
          std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
        break;
    }
    std::fclose(f);
    ++count;
  }
  return count;
}

}  // namespace subdyn
