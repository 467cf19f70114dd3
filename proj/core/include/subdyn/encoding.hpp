#pragma once

#include "subdyn/topology.hpp"

namespace subdyn {

/// Position encoding relative to Dirichlet boundary values. Rods drop their
/// root vertices and store offsets from the strand root; cloth/solids keep all
/// vertices offset by the mean of the Dirichlet vertex positions.
struct RelativeEncoding {
  enum class Mode { RootRelative, DirichletMeanRelative };

  Mode mode = Mode::DirichletMeanRelative;
  int num_vertices = 0;
  std::vector<int> anchors;  // roots (RootRelative) or Dirichlet vertices

  // RootRelative only
  std::vector<int> encoded_verts;  // non-root vertices, ascending
  std::vector<int> anchor_of;      // strand root aligned with encoded_verts
  std::vector<int> anchor_slot;    // index into anchors, aligned with encoded_verts

  int encoded_dim() const {
    return mode == Mode::RootRelative ? 3 * static_cast<int>(encoded_verts.size())
                                      : 3 * num_vertices;
  }
  int anchor_dim() const { return 3 * static_cast<int>(anchors.size()); }
};

RelativeEncoding make_root_relative(const Topology& topo);
RelativeEncoding make_dirichlet_mean_relative(int num_vertices, std::vector<int> dirichlet_verts);

/// Anchor reference positions taken from the frame itself.
VecX encode_relative(const RelativeEncoding& enc, const VecX& x);

/// Inverts encode_relative given the boundary values (anchor positions,
/// 3 * |anchors|). Throws MissingBcValues on a size mismatch.
VecX decode_relative(const RelativeEncoding& enc, const VecX& reduced, const VecX& anchor_positions);

/// Pulls the full-space gradient back onto the reduced coordinates
/// (the anchor reference is data, not a function of the reduced vector).
VecX reduce_gradient(const RelativeEncoding& enc, const VecX& full_grad);

}  // namespace subdyn
