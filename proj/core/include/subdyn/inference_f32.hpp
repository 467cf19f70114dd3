#pragma once

#include "subdyn/integrator.hpp"

namespace subdyn {

/// Single-sample float32 inference net. Eval-mode batchnorm layers are folded
/// into affine scale/shift ops ahead of time.
struct MlpF32 {
  struct Dense {
    Eigen::MatrixXf w;
    Eigen::VectorXf b;
  };
  struct Affine {
    Eigen::VectorXf scale, shift;
  };
  enum class Kind { Dense, Affine, Swish, SaveSkip, AddSkip };
  struct Node {
    Kind kind;
    int idx = -1;
  };

  std::vector<Node> nodes;
  std::vector<Dense> dense;
  std::vector<Affine> affine;
  int input_dim = 0, output_dim = 0;

  Eigen::VectorXf apply(const Eigen::VectorXf& x) const;

  struct Trace {
    std::vector<Eigen::VectorXf> values;  // value entering each node
    std::vector<Eigen::VectorXf> skips;
  };
  Eigen::VectorXf apply_traced(const Eigen::VectorXf& x, Trace& trace) const;

  /// Reverse sweep from an output cotangent using a recorded trace.
  Eigen::VectorXf vjp(const Trace& trace, const Eigen::VectorXf& seed) const;
};

MlpF32 make_f32(const MlpSpec& spec, const MlpWeights& weights);

struct DecoderF32 {
  MlpF32 net;
  Eigen::VectorXf in_mean, in_std;
};
DecoderF32 make_decoder_f32(const AutoencoderWeights& ae);

struct IntegratorF32 {
  MlpF32 net;
  Eigen::VectorXf in_mean, in_std, out_mean, out_std;
};
IntegratorF32 make_integrator_f32(const IntegratorWeights& integrator);

Eigen::VectorXf integrator_predict_f32(const IntegratorF32& integ, const Eigen::VectorXf& q);

/// Relative coordinates of a latent (float path).
Eigen::VectorXf decode_relative_f32(const DecoderF32& dec, const Eigen::VectorXf& z);

}  // namespace subdyn
