#include "subdyn/inference_f32.hpp"

#include <cmath>

namespace subdyn {
namespace {

constexpr float kBnEps = 1e-5f;

inline float sigmoidf(float x) {
  if (x >= 0.f) return 1.f / (1.f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.f + e);
}

inline Eigen::VectorXf swishf(const Eigen::VectorXf& v) {
  return v.unaryExpr([](float x) { return x * sigmoidf(x); });
}

}  // namespace

MlpF32 make_f32(const MlpSpec& spec, const MlpWeights& weights) {
  MlpF32 net;
  net.input_dim = spec.input_dim;
  net.output_dim = spec.output_dim;
  for (const Op& op : compile_ops(spec)) {
    switch (op.kind) {
      case OpKind::Dense: {
        MlpF32::Dense d;
        d.w = weights.dense_w[op.dense_idx].cast<float>();
        d.b = weights.dense_b[op.dense_idx].cast<float>();
        net.nodes.push_back({MlpF32::Kind::Dense, static_cast<int>(net.dense.size())});
        net.dense.push_back(std::move(d));
        break;
      }
      case OpKind::BatchNorm: {
        // fold eval-mode batchnorm into scale/shift
        const VecX& rv = weights.bn_run_var[op.bn_idx];
        const VecX& rm = weights.bn_run_mean[op.bn_idx];
        const VecX& gamma = weights.bn_gamma[op.bn_idx];
        const VecX& beta = weights.bn_beta[op.bn_idx];
        MlpF32::Affine a;
        a.scale = (gamma.array() / (rv.array() + static_cast<double>(kBnEps)).sqrt())
                      .cast<float>();
        a.shift = (beta.array() - rm.array() * (gamma.array() /
                                                (rv.array() + static_cast<double>(kBnEps)).sqrt()))
                      .cast<float>();
        net.nodes.push_back({MlpF32::Kind::Affine, static_cast<int>(net.affine.size())});
        net.affine.push_back(std::move(a));
        break;
      }
      case OpKind::Swish:
        net.nodes.push_back({MlpF32::Kind::Swish, -1});
        break;
      case OpKind::SaveSkip:
        net.nodes.push_back({MlpF32::Kind::SaveSkip, -1});
        break;
      case OpKind::AddSkip:
        net.nodes.push_back({MlpF32::Kind::AddSkip, -1});
        break;
    }
  }
  return net;
}

Eigen::VectorXf MlpF32::apply(const Eigen::VectorXf& x) const {
  Eigen::VectorXf h = x;
  std::vector<Eigen::VectorXf> skips;
  for (const Node& node : nodes) {
    switch (node.kind) {
      case Kind::Dense: h = dense[node.idx].w * h + dense[node.idx].b; break;
      case Kind::Affine:
        h = (h.array() * affine[node.idx].scale.array() + affine[node.idx].shift.array())
                .matrix();
        break;
      case Kind::Swish: h = swishf(h); break;
      case Kind::SaveSkip: skips.push_back(h); break;
      case Kind::AddSkip:
        h += skips.back();
        skips.pop_back();
        break;
    }
  }
  return h;
}

Eigen::VectorXf MlpF32::apply_traced(const Eigen::VectorXf& x, Trace& trace) const {
  trace.values.assign(nodes.size(), {});
  trace.skips.clear();
  Eigen::VectorXf h = x;
  std::vector<Eigen::VectorXf> skips;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    trace.values[i] = h;
    switch (node.kind) {
      case Kind::Dense: h = dense[node.idx].w * h + dense[node.idx].b; break;
      case Kind::Affine:
        h = (h.array() * affine[node.idx].scale.array() + affine[node.idx].shift.array())
                .matrix();
        break;
      case Kind::Swish: h = swishf(h); break;
      case Kind::SaveSkip: skips.push_back(h); break;
      case Kind::AddSkip:
        h += skips.back();
        skips.pop_back();
        break;
    }
  }
  return h;
}

Eigen::VectorXf MlpF32::vjp(const Trace& trace, const Eigen::VectorXf& seed) const {
  Eigen::VectorXf dh = seed;
  std::vector<Eigen::VectorXf> skip_grads;
  for (int i = static_cast<int>(nodes.size()) - 1; i >= 0; --i) {
    const Node& node = nodes[i];
    switch (node.kind) {
      case Kind::Dense: dh = dense[node.idx].w.transpose() * dh; break;
      case Kind::Affine: dh = dh.cwiseProduct(affine[node.idx].scale); break;
      case Kind::Swish: {
        const Eigen::VectorXf& z = trace.values[i];
        dh = dh.cwiseProduct(z.unaryExpr([](float v) {
                   const float s = sigmoidf(v);
                   return s * (1.f + v * (1.f - s));
                 }).eval());
        break;
      }
      case Kind::SaveSkip:
        dh += skip_grads.back();
        skip_grads.pop_back();
        break;
      case Kind::AddSkip: skip_grads.push_back(dh); break;
    }
  }
  return dh;
}

DecoderF32 make_decoder_f32(const AutoencoderWeights& ae) {
  DecoderF32 dec;
  dec.net = make_f32(ae.dec_spec, ae.dec);
  dec.in_mean = ae.in_mean.cast<float>();
  dec.in_std = ae.in_std.cast<float>();
  return dec;
}

IntegratorF32 make_integrator_f32(const IntegratorWeights& integrator) {
  IntegratorF32 integ;
  integ.net = make_f32(integrator.spec, integrator.net);
  integ.in_mean = integrator.in_mean.cast<float>();
  integ.in_std = integrator.in_std.cast<float>();
  integ.out_mean = integrator.out_mean.cast<float>();
  integ.out_std = integrator.out_std.cast<float>();
  return integ;
}

Eigen::VectorXf integrator_predict_f32(const IntegratorF32& integ, const Eigen::VectorXf& q) {
  Eigen::VectorXf qn = (q - integ.in_mean).cwiseQuotient(integ.in_std);
  Eigen::VectorXf out = integ.net.apply(qn);
  return integ.out_mean + integ.out_std.cwiseProduct(out);
}

Eigen::VectorXf decode_relative_f32(const DecoderF32& dec, const Eigen::VectorXf& z) {
  Eigen::VectorXf u = dec.net.apply(z);
  return u.cwiseProduct(dec.in_std) + dec.in_mean;
}

}  // namespace subdyn
