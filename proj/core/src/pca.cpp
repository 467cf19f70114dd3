#include "subdyn/pca.hpp"

#include <Eigen/SVD>

namespace subdyn {

PcaBasis pca_fit(const MatX& frames, int k) {
  const Eigen::Index dim = frames.rows(), n = frames.cols();
  if (k <= 0) throw Error(ErrorCode::InvalidArgument, "pca k must be positive");
  if (n < k) throw Error(ErrorCode::InvalidArgument, "pca needs at least k frames");
  if (dim < k) throw Error(ErrorCode::InvalidArgument, "pca k exceeds data dimension");

  PcaBasis out;
  out.mean = frames.rowwise().mean();
  MatX centered = frames.colwise() - out.mean;

  Eigen::BDCSVD<MatX> svd(centered, Eigen::ComputeThinU);
  const VecX& sv = svd.singularValues();
  const double tol =
      std::max(dim, n) * std::numeric_limits<double>::epsilon() * (sv.size() ? sv[0] : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  out.rank_deficient = rank < k;

  out.basis = svd.matrixU().leftCols(k);
  out.singular_values = sv.head(k);

  // sign convention: largest-magnitude component positive
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    out.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, j) < 0.0) out.basis.col(j) = -out.basis.col(j);
  }
  return out;
}

}  // namespace subdyn
