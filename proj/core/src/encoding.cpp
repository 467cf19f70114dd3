#include "subdyn/encoding.hpp"

#include <algorithm>

namespace subdyn {

RelativeEncoding make_root_relative(const Topology& topo) {
  if (topo.kind != TopologyKind::RodSet)
    throw Error(ErrorCode::InvalidArgument, "root-relative encoding needs a rod set");
  RelativeEncoding enc;
  enc.mode = RelativeEncoding::Mode::RootRelative;
  enc.num_vertices = topo.num_vertices;
  for (const auto& strand : topo.strands) enc.anchors.push_back(strand.front());
  for (size_t s = 0; s < topo.strands.size(); ++s)
    for (size_t i = 1; i < topo.strands[s].size(); ++i) {
      enc.encoded_verts.push_back(topo.strands[s][i]);
      enc.anchor_of.push_back(topo.strands[s].front());
      enc.anchor_slot.push_back(static_cast<int>(s));
    }
  return enc;
}

RelativeEncoding make_dirichlet_mean_relative(int num_vertices, std::vector<int> dirichlet_verts) {
  if (dirichlet_verts.empty())
    throw Error(ErrorCode::InvalidArgument, "need at least one Dirichlet vertex");
  RelativeEncoding enc;
  enc.mode = RelativeEncoding::Mode::DirichletMeanRelative;
  enc.num_vertices = num_vertices;
  enc.anchors = std::move(dirichlet_verts);
  std::sort(enc.anchors.begin(), enc.anchors.end());
  return enc;
}

VecX encode_relative(const RelativeEncoding& enc, const VecX& x) {
  if (x.size() != 3 * enc.num_vertices)
    throw Error(ErrorCode::LengthMismatch, "encode_relative frame size");
  if (enc.mode == RelativeEncoding::Mode::RootRelative) {
    VecX r(enc.encoded_dim());
    for (size_t k = 0; k < enc.encoded_verts.size(); ++k)
      r.segment<3>(3 * k) =
          x.segment<3>(3 * enc.encoded_verts[k]) - x.segment<3>(3 * enc.anchor_of[k]);
    return r;
  }
  Vec3 ref = Vec3::Zero();
  for (int v : enc.anchors) ref += x.segment<3>(3 * v);
  ref /= static_cast<double>(enc.anchors.size());
  VecX r(x.size());
  for (int i = 0; i < enc.num_vertices; ++i) r.segment<3>(3 * i) = x.segment<3>(3 * i) - ref;
  return r;
}

VecX decode_relative(const RelativeEncoding& enc, const VecX& reduced,
                     const VecX& anchor_positions) {
  if (anchor_positions.size() != enc.anchor_dim())
    throw Error(ErrorCode::MissingBcValues, "anchor positions missing or mis-sized");
  if (reduced.size() != enc.encoded_dim())
    throw Error(ErrorCode::LengthMismatch, "decode_relative reduced size");

  if (enc.mode == RelativeEncoding::Mode::RootRelative) {
    VecX x = VecX::Zero(3 * enc.num_vertices);
    for (size_t s = 0; s < enc.anchors.size(); ++s)
      x.segment<3>(3 * enc.anchors[s]) = anchor_positions.segment<3>(3 * s);
    for (size_t k = 0; k < enc.encoded_verts.size(); ++k)
      x.segment<3>(3 * enc.encoded_verts[k]) =
          reduced.segment<3>(3 * k) + anchor_positions.segment<3>(3 * enc.anchor_slot[k]);
    return x;
  }
  Vec3 ref = Vec3::Zero();
  for (size_t s = 0; s < enc.anchors.size(); ++s) ref += anchor_positions.segment<3>(3 * s);
  ref /= static_cast<double>(enc.anchors.size());
  VecX x(reduced.size());
  for (int i = 0; i < enc.num_vertices; ++i) x.segment<3>(3 * i) = reduced.segment<3>(3 * i) + ref;
  return x;
}

VecX reduce_gradient(const RelativeEncoding& enc, const VecX& full_grad) {
  if (enc.mode == RelativeEncoding::Mode::RootRelative) {
    VecX g(enc.encoded_dim());
    for (size_t k = 0; k < enc.encoded_verts.size(); ++k)
      g.segment<3>(3 * k) = full_grad.segment<3>(3 * enc.encoded_verts[k]);
    return g;
  }
  return full_grad;
}

}  // namespace subdyn
