#pragma once

#include "subdyn/common.hpp"

namespace subdyn {

struct PcaBasis {
  VecX mean;             // full-space dim
  MatX basis;            // dim x k, orthonormal columns
  VecX singular_values;  // k
  bool rank_deficient = false;

  VecX project(const VecX& x) const { return basis.transpose() * (x - mean); }
  VecX expand(const VecX& z) const { return mean + basis * z; }
};

/// Top-k principal directions of the columns of `frames` (dim x n), mean
/// centered, with a deterministic sign convention (largest-magnitude component
/// of each basis vector is positive). If the data has fewer than k numerically
/// nonzero singular values the basis is padded with an orthonormal complement
/// and flagged rank_deficient.
PcaBasis pca_fit(const MatX& frames, int k);

}  // namespace subdyn
