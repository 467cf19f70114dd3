#pragma once

#include "subdyn/common.hpp"

namespace subdyn {

/// Dense stack with Swish activations. When `residual` is set, a hidden width
/// equal to the running width becomes a block Linear-BN-Swish-Linear-BN with a
/// skip connection and Swish after the add; otherwise each hidden entry is a
/// plain Linear(-BN)-Swish. The output layer is linear.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  bool residual = false;
  bool batchnorm = false;
};

enum class OpKind { Dense, BatchNorm, Swish, SaveSkip, AddSkip };

struct Op {
  OpKind kind;
  int in_dim = 0, out_dim = 0;
  int dense_idx = -1, bn_idx = -1;
};

/// Compiled op sequence for a spec (deterministic).
std::vector<Op> compile_ops(const MlpSpec& spec);

struct MlpWeights {
  std::vector<MatX> dense_w;  // out x in
  std::vector<VecX> dense_b;
  std::vector<VecX> bn_gamma, bn_beta;
  std::vector<VecX> bn_run_mean, bn_run_var;  // state, not trained
  double bn_momentum = 0.9;
};

struct MlpGrads {
  std::vector<MatX> dense_w;
  std::vector<VecX> dense_b;
  std::vector<VecX> bn_gamma, bn_beta;

  void accumulate(const MlpGrads& other, double scale);
  void scale(double s);
};

MlpGrads zero_grads_like(const MlpWeights& w);

/// Kaiming-style uniform init, bound sqrt(6 / fan_in); biases zero, batchnorm
/// at identity.
MlpWeights init_weights(const MlpSpec& spec, uint64_t seed);

enum class PassMode { Train, Eval };

/// Opaque intermediates of one forward pass.
struct MlpCache {
  struct OpCache {
    MatX input;       // dense / residual save
    MatX normalized;  // batchnorm x-hat
    VecX mean, var;   // batch statistics (train mode)
  };
  std::vector<OpCache> ops;
  PassMode mode = PassMode::Eval;
  MatX output;
};

/// Batch in columns (input_dim x B). Train mode uses batch statistics and
/// updates running stats in `weights`; eval mode reads running stats only.
/// Throws BatchTooSmall for train-mode batchnorm with B < 2.
MatX forward(const MlpSpec& spec, MlpWeights& weights, const MatX& batch, PassMode mode,
             MlpCache* cache = nullptr);

/// Eval-only forward that never mutates weights.
MatX forward_eval(const MlpSpec& spec, const MlpWeights& weights, const MatX& batch,
                  MlpCache* cache = nullptr);

/// Reverse-mode gradients of the forward map recorded in `cache`.
/// Returns the gradient w.r.t. the input batch.
MatX backward(const MlpSpec& spec, const MlpWeights& weights, const MlpCache& cache,
              const MatX& output_grad, MlpGrads& grads);

VecX swish(const VecX& v);
MatX swish(const MatX& v);

/// Trainable parameter count (dense + batchnorm scale/shift).
int64_t param_count(const MlpWeights& w);
void pack_params(const MlpWeights& w, VecX& flat);
void unpack_params(const VecX& flat, MlpWeights& w);
void pack_grads(const MlpGrads& g, VecX& flat);

}  // namespace subdyn
