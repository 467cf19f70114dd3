#include "subdyn/sequence.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace subdyn {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'D', 'S', 'Q', '0', '0', '0', '1'};

json topology_to_json(const Topology& topo) {
  json j;
  switch (topo.kind) {
    case TopologyKind::RodSet:
      j["kind"] = "rodset";
      j["strands"] = topo.strands;
      break;
    case TopologyKind::TriMesh:
      j["kind"] = "trimesh";
      j["triangles"] = topo.triangles;
      break;
    case TopologyKind::TetMesh:
      j["kind"] = "tetmesh";
      j["tets"] = topo.tets;
      break;
  }
  j["vertices"] = topo.num_vertices;
  return j;
}

Topology topology_from_json(const json& j) {
  const std::string kind = j.at("kind");
  const int n = j.at("vertices");
  if (kind == "rodset")
    return make_rod_set(n, j.at("strands").get<std::vector<std::vector<int>>>());
  if (kind == "trimesh")
    return make_tri_mesh(n, j.at("triangles").get<std::vector<std::array<int, 3>>>());
  if (kind == "tetmesh")
    return make_tet_mesh(n, j.at("tets").get<std::vector<std::array<int, 4>>>());
  throw Error(ErrorCode::FormatVersionMismatch, "unknown topology kind: " + kind);
}

void write_f32(std::ostream& os, const VecX& v) {
  std::vector<float> buf(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) buf[i] = static_cast<float>(v[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

VecX read_f32(std::istream& is, Eigen::Index count) {
  std::vector<float> buf(count);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw Error(ErrorCode::TruncatedFile, "frame record cut short");
  VecX v(count);
  for (Eigen::Index i = 0; i < count; ++i) v[i] = buf[i];
  return v;
}

}  // namespace

void sequence_io_write(const StateSequence& seq, const Topology& topo, const std::string& path) {
  const int bc_dim = seq.frames.empty() ? 0 : static_cast<int>(seq.frames.front().p.size());
  for (const Frame& f : seq.frames) {
    if (f.x.size() != topo.dof_count())
      throw Error(ErrorCode::LengthMismatch, "frame position length vs topology");
    if (f.p.size() != bc_dim) throw Error(ErrorCode::LengthMismatch, "inconsistent bc_dim");
  }

  json header;
  header["topology"] = topology_to_json(topo);
  header["dt"] = seq.dt;
  header["bc_dim"] = bc_dim;
  header["frame_count"] = seq.frame_count();
  header["scenario"] = seq.scenario;
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open for write: " + path);
  os.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  os.write(reinterpret_cast<const char*>(&hlen), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Frame& f : seq.frames) {
    write_f32(os, f.x);
    write_f32(os, f.p);
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed: " + path);
}

LoadedSequence sequence_io_read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open for read: " + path);

  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(ErrorCode::FormatVersionMismatch, "bad magic in " + path);

  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 8);
  if (!is) throw Error(ErrorCode::TruncatedFile, "missing header length");
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw Error(ErrorCode::TruncatedFile, "header cut short");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("header parse: ") + e.what());
  }

  LoadedSequence out;
  out.topology = topology_from_json(header.at("topology"));
  out.sequence.dt = header.at("dt");
  out.sequence.scenario = header.value("scenario", "");
  const int frame_count = header.at("frame_count");
  const int bc_dim = header.at("bc_dim");
  out.sequence.frames.reserve(frame_count);
  for (int t = 0; t < frame_count; ++t) {
    Frame f;
    f.t = t;
    f.x = read_f32(is, out.topology.dof_count());
    f.p = read_f32(is, bc_dim);
    out.sequence.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace subdyn
