#include "subdyn/mlp.hpp"

#include <cmath>

namespace subdyn {
namespace {

constexpr double kBnEps = 1e-5;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline MatX sigmoid(const MatX& m) { return m.unaryExpr([](double v) { return sigmoid(v); }); }

}  // namespace

VecX swish(const VecX& v) { return v.unaryExpr([](double x) { return x * sigmoid(x); }); }
MatX swish(const MatX& v) { return v.unaryExpr([](double x) { return x * sigmoid(x); }); }

std::vector<Op> compile_ops(const MlpSpec& spec) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0)
    throw Error(ErrorCode::InvalidArgument, "mlp dims must be positive");
  std::vector<Op> ops;
  int dense = 0, bn = 0;
  int cur = spec.input_dim;
  auto push_dense = [&](int in, int out) {
    ops.push_back({OpKind::Dense, in, out, dense++, -1});
  };
  auto push_bn = [&](int d) {
    if (spec.batchnorm) ops.push_back({OpKind::BatchNorm, d, d, -1, bn++});
  };
  for (int w : spec.hidden) {
    if (w <= 0) throw Error(ErrorCode::InvalidArgument, "hidden width must be positive");
    if (spec.residual && w == cur) {
      ops.push_back({OpKind::SaveSkip, cur, cur, -1, -1});
      push_dense(cur, w);
      push_bn(w);
      ops.push_back({OpKind::Swish, w, w, -1, -1});
      push_dense(w, w);
      push_bn(w);
      ops.push_back({OpKind::AddSkip, w, w, -1, -1});
      ops.push_back({OpKind::Swish, w, w, -1, -1});
    } else {
      push_dense(cur, w);
      push_bn(w);
      ops.push_back({OpKind::Swish, w, w, -1, -1});
    }
    cur = w;
  }
  push_dense(cur, spec.output_dim);
  return ops;
}

MlpWeights init_weights(const MlpSpec& spec, uint64_t seed) {
  Rng rng(seed);
  MlpWeights w;
  for (const Op& op : compile_ops(spec)) {
    if (op.kind == OpKind::Dense) {
      const double bound = std::sqrt(6.0 / op.in_dim);
      MatX m(op.out_dim, op.in_dim);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
      w.dense_w.push_back(std::move(m));
      w.dense_b.push_back(VecX::Zero(op.out_dim));
    } else if (op.kind == OpKind::BatchNorm) {
      w.bn_gamma.push_back(VecX::Ones(op.out_dim));
      w.bn_beta.push_back(VecX::Zero(op.out_dim));
      w.bn_run_mean.push_back(VecX::Zero(op.out_dim));
      w.bn_run_var.push_back(VecX::Ones(op.out_dim));
    }
  }
  return w;
}

MlpGrads zero_grads_like(const MlpWeights& w) {
  MlpGrads g;
  for (const auto& m : w.dense_w) g.dense_w.push_back(MatX::Zero(m.rows(), m.cols()));
  for (const auto& v : w.dense_b) g.dense_b.push_back(VecX::Zero(v.size()));
  for (const auto& v : w.bn_gamma) g.bn_gamma.push_back(VecX::Zero(v.size()));
  for (const auto& v : w.bn_beta) g.bn_beta.push_back(VecX::Zero(v.size()));
  return g;
}

void MlpGrads::accumulate(const MlpGrads& other, double s) {
  for (size_t i = 0; i < dense_w.size(); ++i) dense_w[i] += s * other.dense_w[i];
  for (size_t i = 0; i < dense_b.size(); ++i) dense_b[i] += s * other.dense_b[i];
  for (size_t i = 0; i < bn_gamma.size(); ++i) bn_gamma[i] += s * other.bn_gamma[i];
  for (size_t i = 0; i < bn_beta.size(); ++i) bn_beta[i] += s * other.bn_beta[i];
}

void MlpGrads::scale(double s) {
  for (auto& m : dense_w) m *= s;
  for (auto& v : dense_b) v *= s;
  for (auto& v : bn_gamma) v *= s;
  for (auto& v : bn_beta) v *= s;
}

namespace {

MatX run_forward(const MlpSpec& spec, const MlpWeights& weights_const, MlpWeights* weights_mut,
                 const MatX& batch, PassMode mode, MlpCache* cache) {
  if (batch.rows() != spec.input_dim)
    throw Error(ErrorCode::LengthMismatch, "batch rows != input_dim");
  const auto ops = compile_ops(spec);
  const Eigen::Index bsz = batch.cols();

  if (cache) {
    cache->ops.assign(ops.size(), {});
    cache->mode = mode;
  }

  MatX h = batch;
  std::vector<MatX> skip_stack;
  for (size_t i = 0; i < ops.size(); ++i) {
    const Op& op = ops[i];
    switch (op.kind) {
      case OpKind::Dense: {
        if (cache) cache->ops[i].input = h;
        h = (weights_const.dense_w[op.dense_idx] * h).colwise() +
            weights_const.dense_b[op.dense_idx];
        break;
      }
      case OpKind::BatchNorm: {
        const VecX& gamma = weights_const.bn_gamma[op.bn_idx];
        const VecX& beta = weights_const.bn_beta[op.bn_idx];
        VecX mean, var;
        if (mode == PassMode::Train) {
          if (bsz < 2) throw Error(ErrorCode::BatchTooSmall, "batchnorm needs batch >= 2");
          mean = h.rowwise().mean();
          MatX centered = h.colwise() - mean;
          var = centered.cwiseProduct(centered).rowwise().mean();
          if (weights_mut) {
            const double m = weights_const.bn_momentum;
            weights_mut->bn_run_mean[op.bn_idx] =
                m * weights_const.bn_run_mean[op.bn_idx] + (1.0 - m) * mean;
            weights_mut->bn_run_var[op.bn_idx] =
                m * weights_const.bn_run_var[op.bn_idx] + (1.0 - m) * var;
          }
        } else {
          mean = weights_const.bn_run_mean[op.bn_idx];
          var = weights_const.bn_run_var[op.bn_idx];
        }
        VecX inv_std = (var.array() + kBnEps).sqrt().inverse();
        MatX xhat = ((h.colwise() - mean).array().colwise() * inv_std.array()).matrix();
        h = ((xhat.array().colwise() * gamma.array()).colwise() + beta.array()).matrix();
        if (cache) {
          cache->ops[i].normalized = xhat;
          cache->ops[i].mean = mean;
          cache->ops[i].var = var;
        }
        break;
      }
      case OpKind::Swish: {
        if (cache) cache->ops[i].input = h;
        h = swish(h);
        break;
      }
      case OpKind::SaveSkip: {
        skip_stack.push_back(h);
        break;
      }
      case OpKind::AddSkip: {
        h += skip_stack.back();
        skip_stack.pop_back();
        break;
      }
    }
  }
  if (cache) cache->output = h;
  return h;
}

}  // namespace

MatX forward(const MlpSpec& spec, MlpWeights& weights, const MatX& batch, PassMode mode,
             MlpCache* cache) {
  return run_forward(spec, weights, mode == PassMode::Train ? &weights : nullptr, batch, mode,
                     cache);
}

MatX forward_eval(const MlpSpec& spec, const MlpWeights& weights, const MatX& batch,
                  MlpCache* cache) {
  return run_forward(spec, weights, nullptr, batch, PassMode::Eval, cache);
}

MatX backward(const MlpSpec& spec, const MlpWeights& weights, const MlpCache& cache,
              const MatX& output_grad, MlpGrads& grads) {
  const auto ops = compile_ops(spec);
  if (grads.dense_w.empty()) grads = zero_grads_like(weights);

  MatX dh = output_grad;
  std::vector<MatX> skip_grads;
  for (int i = static_cast<int>(ops.size()) - 1; i >= 0; --i) {
    const Op& op = ops[i];
    switch (op.kind) {
      case OpKind::Dense: {
        const MatX& x = cache.ops[i].input;
        grads.dense_w[op.dense_idx] += dh * x.transpose();
        grads.dense_b[op.dense_idx] += dh.rowwise().sum();
        dh = weights.dense_w[op.dense_idx].transpose() * dh;
        break;
      }
      case OpKind::BatchNorm: {
        const MatX& xhat = cache.ops[i].normalized;
        const VecX& gamma = weights.bn_gamma[op.bn_idx];
        const VecX inv_std = (cache.ops[i].var.array() + kBnEps).sqrt().inverse();
        grads.bn_gamma[op.bn_idx] += dh.cwiseProduct(xhat).rowwise().sum();
        grads.bn_beta[op.bn_idx] += dh.rowwise().sum();
        MatX dxhat = (dh.array().colwise() * gamma.array()).matrix();
        if (cache.mode == PassMode::Train) {
          const double n = static_cast<double>(dh.cols());
          VecX sum_dxhat = dxhat.rowwise().sum();
          VecX sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
          MatX term = dxhat * n;
          term.colwise() -= sum_dxhat;
          term -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
          dh = (term.array().colwise() * (inv_std.array() / n)).matrix();
        } else {
          dh = (dxhat.array().colwise() * inv_std.array()).matrix();
        }
        break;
      }
      case OpKind::Swish: {
        const MatX& z = cache.ops[i].input;
        MatX s = sigmoid(z);
        MatX deriv = (s.array() * (1.0 + z.array() * (1.0 - s.array()))).matrix();
        dh = dh.cwiseProduct(deriv);
        break;
      }
      case OpKind::SaveSkip: {
        dh += skip_grads.back();
        skip_grads.pop_back();
        break;
      }
      case OpKind::AddSkip: {
        skip_grads.push_back(dh);
        break;
      }
    }
  }
  return dh;
}

int64_t param_count(const MlpWeights& w) {
  int64_t n = 0;
  for (const auto& m : w.dense_w) n += m.size();
  for (const auto& v : w.dense_b) n += v.size();
  for (const auto& v : w.bn_gamma) n += v.size();
  for (const auto& v : w.bn_beta) n += v.size();
  return n;
}

void pack_params(const MlpWeights& w, VecX& flat) {
  flat.resize(param_count(w));
  Eigen::Index at = 0;
  auto put_m = [&](const MatX& m) {
    flat.segment(at, m.size()) = Eigen::Map<const VecX>(m.data(), m.size());
    at += m.size();
  };
  auto put_v = [&](const VecX& v) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  };
  for (const auto& m : w.dense_w) put_m(m);
  for (const auto& v : w.dense_b) put_v(v);
  for (const auto& v : w.bn_gamma) put_v(v);
  for (const auto& v : w.bn_beta) put_v(v);
}

void unpack_params(const VecX& flat, MlpWeights& w) {
  Eigen::Index at = 0;
  auto get_m = [&](MatX& m) {
    Eigen::Map<VecX>(m.data(), m.size()) = flat.segment(at, m.size());
    at += m.size();
  };
  auto get_v = [&](VecX& v) {
    v = flat.segment(at, v.size());
    at += v.size();
  };
  for (auto& m : w.dense_w) get_m(m);
  for (auto& v : w.dense_b) get_v(v);
  for (auto& v : w.bn_gamma) get_v(v);
  for (auto& v : w.bn_beta) get_v(v);
}

void pack_grads(const MlpGrads& g, VecX& flat) {
  Eigen::Index total = 0;
  for (const auto& m : g.dense_w) total += m.size();
  for (const auto& v : g.dense_b) total += v.size();
  for (const auto& v : g.bn_gamma) total += v.size();
  for (const auto& v : g.bn_beta) total += v.size();
  flat.resize(total);
  Eigen::Index at = 0;
  for (const auto& m : g.dense_w) {
    flat.segment(at, m.size()) = Eigen::Map<const VecX>(m.data(), m.size());
    at += m.size();
  }
  for (const auto& v : g.dense_b) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  }
  for (const auto& v : g.bn_gamma) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  }
  for (const auto& v : g.bn_beta) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  }
}

}  // namespace subdyn
