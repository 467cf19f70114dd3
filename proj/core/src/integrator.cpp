#include "subdyn/integrator.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "subdyn/adam.hpp"

namespace subdyn {

using nlohmann::json;

VecX integrator_predict(const IntegratorWeights& integrator, const VecX& z_prev,
                        const VecX& z_prev2, const VecX& p_t, const VecX& p_prev,
                        const VecX& p_prev2) {
  VecX q(integrator.spec.input_dim);
  q << z_prev, z_prev2, p_t, p_prev, p_prev2;
  VecX qn = (q - integrator.in_mean).cwiseQuotient(integrator.in_std);
  VecX out = forward_eval(integrator.spec, integrator.net, qn);
  return integrator.out_mean + integrator.out_std.cwiseProduct(out);
}

SelfsupLossParts selfsup_loss(const VecX& z_pred, const SelfsupContext& ctx,
                              const AutoencoderWeights& ae, const SimObject& obj,
                              const MaterialParams& params, double dt, bool penalty_bc,
                              double w_bc, VecX* grad_z) {
  MlpCache cache;
  MatX u = forward_eval(ae.dec_spec, ae.dec, z_pred, grad_z ? &cache : nullptr);
  VecX rel = u.col(0).cwiseProduct(ae.in_std) + ae.in_mean;
  VecX x = decode_relative(ae.encoding, rel, ctx.anchor_positions_t);

  VecX grad;
  IpTerms terms = incremental_potential_value_grad(
      obj, params, x, ctx.x_prev, ctx.x_prev2, dt, penalty_bc ? &ae.encoding.anchors : nullptr,
      penalty_bc ? &ctx.anchor_positions_t : nullptr, w_bc, grad);

  SelfsupLossParts parts;
  parts.inertial = terms.inertial;
  parts.elastic = terms.elastic;
  parts.external = terms.external;
  parts.bc = terms.bc;
  parts.total = terms.total();

  if (grad_z) {
    VecX g_rel = reduce_gradient(ae.encoding, grad);
    MatX g_u = g_rel.cwiseProduct(ae.in_std);
    MlpGrads unused = zero_grads_like(ae.dec);
    MatX gz = backward(ae.dec_spec, ae.dec, cache, g_u, unused);
    *grad_z = gz.col(0);
  }
  return parts;
}

void perturb_latents(MatX& z_prev_batch, MatX& z_prev2_batch, Rng& rng) {
  if (z_prev_batch.rows() != z_prev2_batch.rows() ||
      z_prev_batch.cols() != z_prev2_batch.cols())
    throw Error(ErrorCode::LengthMismatch, "perturb_latents batch shapes");
  const Eigen::Index r = z_prev_batch.rows(), b = z_prev_batch.cols();
  if (2 * b < 2) throw Error(ErrorCode::BatchTooSmall, "perturb_latents needs batch >= 1");

  for (Eigen::Index d = 0; d < r; ++d) {
    double mean = (z_prev_batch.row(d).sum() + z_prev2_batch.row(d).sum()) / (2.0 * b);
    double var = ((z_prev_batch.row(d).array() - mean).square().sum() +
                  (z_prev2_batch.row(d).array() - mean).square().sum()) /
                 (2.0 * b);
    const double bound = 0.1 * std::sqrt(var);
    for (Eigen::Index c = 0; c < b; ++c) {
      z_prev_batch(d, c) += rng.uniform(-bound, bound);
      z_prev2_batch(d, c) += rng.uniform(-bound, bound);
    }
  }
}

double balance_weight(const VecX& x_prev, const VecX& x_prev2, double dt) {
  if (x_prev.size() != x_prev2.size())
    throw Error(ErrorCode::LengthMismatch, "balance_weight frame sizes");
  const int n = static_cast<int>(x_prev.size()) / 3;
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < n; ++i)
    v += (x_prev.segment<3>(3 * i) - x_prev2.segment<3>(3 * i));
  v /= (dt * n);
  return 1.0 / std::max(v.norm(), 1e-6);
}

namespace {

struct Sample {
  int seq;
  int t;  // predicted frame index
  double weight;
};

}  // namespace

std::pair<IntegratorWeights, TrainReport> train_integrator(
    const ScenarioSpec& spec, const ScenarioAssets& assets,
    const std::vector<StateSequence>& dataset, const AutoencoderWeights& ae,
    const IntTrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "empty dataset");
  const double dt = spec.dt;
  const int r = ae.latent_dim;
  const int bc_dim = spec.bc_dim;
  const int in_dim = 2 * r + 3 * bc_dim;

  // cached ground-truth latents and anchor targets per sequence
  std::vector<MatX> latents(dataset.size());
  std::vector<MatX> anchors(dataset.size());
  for (size_t s = 0; s < dataset.size(); ++s) {
    const int T = dataset[s].frame_count();
    MatX frames(assets.object.topology.dof_count(), T);
    for (int t = 0; t < T; ++t) frames.col(t) = dataset[s].frames[t].x;
    latents[s] = ae_encode_batch(ae, frames);
    MatX anc(ae.encoding.anchor_dim(), T);
    for (int t = 0; t < T; ++t)
      for (size_t k = 0; k < ae.encoding.anchors.size(); ++k)
        anc.block<3, 1>(3 * k, t) = dataset[s].frames[t].x.segment<3>(3 * ae.encoding.anchors[k]);
    anchors[s] = anc;
  }

  const DatasetSplit split = make_split(spec);
  const auto ranges =
      train_frame_ranges(split, static_cast<int>(dataset.size()), dataset[0].frame_count());
  std::vector<Sample> samples;
  for (size_t s = 0; s < dataset.size(); ++s)
    for (int t = ranges[s].first + 2; t < ranges[s].second; ++t) {
      Sample smp;
      smp.seq = static_cast<int>(s);
      smp.t = t;
      smp.weight = cfg.balancing
                       ? balance_weight(dataset[s].frames[t - 1].x, dataset[s].frames[t - 2].x, dt)
                       : 1.0;
      samples.push_back(smp);
    }
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "split has no training triples");
  const int n = static_cast<int>(samples.size());

  auto input_of = [&](const Sample& smp) {
    VecX q(in_dim);
    q << latents[smp.seq].col(smp.t - 1), latents[smp.seq].col(smp.t - 2),
        dataset[smp.seq].frames[smp.t].p, dataset[smp.seq].frames[smp.t - 1].p,
        dataset[smp.seq].frames[smp.t - 2].p;
    return q;
  };

  IntegratorWeights integ;
  integ.latent_dim = r;
  integ.bc_dim = bc_dim;
  integ.spec.input_dim = in_dim;
  integ.spec.hidden = spec.int_hidden;
  integ.spec.output_dim = r;
  integ.spec.residual = false;
  integ.spec.batchnorm = false;
  integ.net = init_weights(integ.spec, cfg.seed);
  // zero output layer: the first predictions sit at the mean training latent,
  // keeping early decoded states inside the energies' domain
  integ.net.dense_w.back().setZero();
  integ.net.dense_b.back().setZero();

  {
    MatX all_inputs(in_dim, n);
    for (int i = 0; i < n; ++i) all_inputs.col(i) = input_of(samples[i]);
    fit_normalization(all_inputs, integ.in_mean, integ.in_std);
    MatX all_latents(r, n);
    for (int i = 0; i < n; ++i) all_latents.col(i) = latents[samples[i].seq].col(samples[i].t);
    fit_normalization(all_latents, integ.out_mean, integ.out_std);
  }

  VecX flat;
  pack_params(integ.net, flat);
  AdamState adam = AdamState::create(flat.size(), cfg.lr);
  Rng rng(cfg.seed ^ 0xda3e39cb94b95bdbULL);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainReport report;
  report.seed = cfg.seed;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    adam.lr = cfg.lr * (cfg.lr_decay + (1.0 - cfg.lr_decay) * (1.0 - frac));
    rng.shuffle(order);
    SelfsupLossParts epoch_parts;
    int counted = 0;
    int skipped = 0;

    for (int at = 0; at < n; at += cfg.batch) {
      const int bsz = std::min(cfg.batch, n - at);
      const int branches = cfg.noise ? 2 : 1;

      // raw inputs, clean branch first
      MatX q_raw(in_dim, bsz);
      for (int c = 0; c < bsz; ++c) q_raw.col(c) = input_of(samples[order[at + c]]);

      MlpGrads grads = zero_grads_like(integ.net);
      for (int br = 0; br < branches; ++br) {
        MatX q = q_raw;
        if (br == 1) {
          MatX z1 = q.topRows(r);
          MatX z2 = q.middleRows(r, r);
          perturb_latents(z1, z2, rng);
          q.topRows(r) = z1;
          q.middleRows(r, r) = z2;
        }
        MatX qn = ((q.colwise() - integ.in_mean).array().colwise() / integ.in_std.array()).matrix();
        MlpCache cache;
        MatX out = forward(integ.spec, integ.net, qn, PassMode::Train, &cache);
        MatX z_pred =
            ((out.array().colwise() * integ.out_std.array()).colwise() + integ.out_mean.array())
                .matrix();

        MatX d_out(r, bsz);
        const double inv_count = 1.0 / (bsz * branches);
        if (cfg.supervised) {
          for (int c = 0; c < bsz; ++c) {
            const Sample& smp = samples[order[at + c]];
            VecX diff = z_pred.col(c) - latents[smp.seq].col(smp.t);
            epoch_parts.total += smp.weight * diff.squaredNorm();
            d_out.col(c) = (2.0 * smp.weight * inv_count) * diff.cwiseProduct(integ.out_std);
            ++counted;
          }
        } else {
          // batched decoder pass; energies evaluated per column
          MlpCache dec_cache;
          MatX u = forward_eval(ae.dec_spec, ae.dec, z_pred, &dec_cache);
          MatX g_u(u.rows(), bsz);
          VecX grad_buf;
          for (int c = 0; c < bsz; ++c) {
            const Sample& smp = samples[order[at + c]];
            const double w = smp.weight;
            VecX rel = u.col(c).cwiseProduct(ae.in_std) + ae.in_mean;
            VecX x = decode_relative(ae.encoding, rel, anchors[smp.seq].col(smp.t));

            try {
              const VecX anchor_t = anchors[smp.seq].col(smp.t);
              IpTerms terms = incremental_potential_value_grad(
                  assets.object, spec.material, x, dataset[smp.seq].frames[smp.t - 1].x,
                  dataset[smp.seq].frames[smp.t - 2].x, dt,
                  spec.penalty_bc ? &ae.encoding.anchors : nullptr,
                  spec.penalty_bc ? &anchor_t : nullptr, spec.w_bc, grad_buf);
              epoch_parts.inertial += w * terms.inertial;
              epoch_parts.elastic += w * terms.elastic;
              epoch_parts.external += w * terms.external;
              epoch_parts.bc += w * terms.bc;
              epoch_parts.total += w * terms.total();
              g_u.col(c) = (w * inv_count) *
                           reduce_gradient(ae.encoding, grad_buf).cwiseProduct(ae.in_std);
              ++counted;
            } catch (const Error&) {
              // decoded state outside an energy's domain: no learning signal
              g_u.col(c).setZero();
              ++skipped;
            }
          }
          MlpGrads dec_unused = zero_grads_like(ae.dec);
          MatX gz = backward(ae.dec_spec, ae.dec, dec_cache, g_u, dec_unused);
          d_out = (gz.array().colwise() * integ.out_std.array()).matrix();
        }
        backward(integ.spec, integ.net, cache, d_out, grads);
      }

      VecX g;
      pack_params(integ.net, flat);
      pack_grads(grads, g);
      if (cfg.grad_clip > 0.0) {
        const double norm = g.norm();
        if (norm > cfg.grad_clip) g *= cfg.grad_clip / norm;
      }
      adam_step(flat, g, adam);
      unpack_params(flat, integ.net);
    }

    const double denom = counted ? counted : 1;
    report.skipped_samples.push_back(skipped);
    report.total.push_back(epoch_parts.total / denom);
    report.inertial.push_back(epoch_parts.inertial / denom);
    report.elastic.push_back(epoch_parts.elastic / denom);
    report.external.push_back(epoch_parts.external / denom);
    report.bc.push_back(epoch_parts.bc / denom);
    if (!std::isfinite(report.total.back()))
      throw Error(ErrorCode::DivergedLoss,
                  "integrator loss is not finite at epoch " + std::to_string(epoch));
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(integ), std::move(report)};
}

void save_integrator(const std::string& path, const IntegratorWeights& integ) {
  CheckpointWriter w;
  w.add_mlp("net", integ.net);
  w.add("in_mean", integ.in_mean);
  w.add("in_std", integ.in_std);
  w.add("out_mean", integ.out_mean);
  w.add("out_std", integ.out_std);
  json meta;
  meta["spec"] = json::parse(mlp_spec_to_json(integ.spec));
  meta["latent_dim"] = integ.latent_dim;
  meta["bc_dim"] = integ.bc_dim;
  w.write(path, "integrator", meta.dump());
}

IntegratorWeights load_integrator(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.kind != "integrator")
    throw Error(ErrorCode::FormatVersionMismatch, "checkpoint kind is " + ck.kind);
  json meta = json::parse(ck.meta_json);
  IntegratorWeights integ;
  integ.spec = mlp_spec_from_json(meta.at("spec").dump());
  integ.latent_dim = meta.at("latent_dim");
  integ.bc_dim = meta.at("bc_dim");
  integ.net = ck.mlp("net", integ.spec);
  integ.in_mean = ck.vec("in_mean");
  integ.in_std = ck.vec("in_std");
  integ.out_mean = ck.vec("out_mean");
  integ.out_std = ck.vec("out_std");
  return integ;
}

}  // namespace subdyn
