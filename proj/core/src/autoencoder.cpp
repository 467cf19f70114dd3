#include "subdyn/autoencoder.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "subdyn/adam.hpp"

namespace subdyn {

using nlohmann::json;

std::string TrainReport::to_json_lines() const {
  std::ostringstream os;
  for (size_t e = 0; e < total.size(); ++e) {
    json j;
    j["epoch"] = e;
    j["total"] = total[e];
    if (e < inertial.size()) j["inertial"] = inertial[e];
    if (e < elastic.size()) j["elastic"] = elastic[e];
    if (e < external.size()) j["external"] = external[e];
    if (e < bc.size()) j["bc"] = bc[e];
    os << j.dump() << "\n";
  }
  return os.str();
}

std::pair<MlpSpec, MlpSpec> make_autoencoder_specs(int input_dim, int pca_dim,
                                                   const std::vector<int>& hidden,
                                                   int latent_dim) {
  MlpSpec enc, dec;
  enc.input_dim = input_dim;
  enc.hidden.push_back(pca_dim);
  for (int w : hidden) enc.hidden.push_back(w);
  enc.output_dim = latent_dim;
  enc.residual = true;
  enc.batchnorm = true;

  dec.input_dim = latent_dim;
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) dec.hidden.push_back(*it);
  dec.hidden.push_back(pca_dim);
  dec.output_dim = input_dim;
  dec.residual = true;
  dec.batchnorm = true;
  return {enc, dec};
}

void fit_normalization(const MatX& data, VecX& mean, VecX& std_dev) {
  mean = data.rowwise().mean();
  MatX centered = data.colwise() - mean;
  VecX var = centered.cwiseProduct(centered).rowwise().mean();
  std_dev = var.cwiseSqrt();
  const double floor_abs = 1e-8;
  const double floor_rel = 1e-6 * std_dev.maxCoeff();
  std_dev = std_dev.cwiseMax(std::max(floor_abs, floor_rel));
}

VecX ae_encode(const AutoencoderWeights& ae, const VecX& x_abs) {
  VecX rel = encode_relative(ae.encoding, x_abs);
  VecX u = (rel - ae.in_mean).cwiseQuotient(ae.in_std);
  return forward_eval(ae.enc_spec, ae.enc, u);
}

MatX ae_encode_batch(const AutoencoderWeights& ae, const MatX& frames_abs) {
  MatX rel(ae.in_mean.size(), frames_abs.cols());
  for (Eigen::Index c = 0; c < frames_abs.cols(); ++c)
    rel.col(c) = encode_relative(ae.encoding, frames_abs.col(c));
  MatX u = ((rel.colwise() - ae.in_mean).array().colwise() / ae.in_std.array()).matrix();
  return forward_eval(ae.enc_spec, ae.enc, u);
}

VecX ae_decode_relative(const AutoencoderWeights& ae, const VecX& z) {
  VecX u = forward_eval(ae.dec_spec, ae.dec, z);
  return u.cwiseProduct(ae.in_std) + ae.in_mean;
}

VecX ae_decode(const AutoencoderWeights& ae, const VecX& z, const VecX& anchor_positions) {
  return decode_relative(ae.encoding, ae_decode_relative(ae, z), anchor_positions);
}

std::pair<AutoencoderWeights, TrainReport> train_autoencoder(
    const ScenarioSpec& spec, const ScenarioAssets& assets,
    const std::vector<StateSequence>& dataset, const AeTrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "empty dataset");

  AutoencoderWeights ae;
  ae.encoding = assets.encoding;
  ae.latent_dim = spec.latent_dim;

  // training frames per split
  const DatasetSplit split = make_split(spec);
  const auto ranges =
      train_frame_ranges(split, static_cast<int>(dataset.size()), dataset[0].frame_count());
  std::vector<const Frame*> train_frames;
  for (size_t s = 0; s < dataset.size(); ++s)
    for (int t = ranges[s].first; t < ranges[s].second; ++t)
      train_frames.push_back(&dataset[s].frames[t]);
  if (train_frames.empty()) throw Error(ErrorCode::InvalidArgument, "split has no training frames");

  const int dim = ae.encoding.encoded_dim();
  const int n = static_cast<int>(train_frames.size());
  MatX rel(dim, n);
  for (int c = 0; c < n; ++c) rel.col(c) = encode_relative(ae.encoding, train_frames[c]->x);

  fit_normalization(rel, ae.in_mean, ae.in_std);
  MatX u = ((rel.colwise() - ae.in_mean).array().colwise() / ae.in_std.array()).matrix();

  const int k = std::min({spec.pca_dim, dim, n});
  ae.pca = pca_fit(u, k);

  auto [enc_spec, dec_spec] = make_autoencoder_specs(dim, k, spec.ae_hidden, spec.latent_dim);
  ae.enc_spec = enc_spec;
  ae.dec_spec = dec_spec;
  ae.enc = init_weights(enc_spec, cfg.seed);
  ae.dec = init_weights(dec_spec, cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  // PCA initialization of the boundary layers
  ae.enc.dense_w.front() = ae.pca.basis.transpose();
  ae.enc.dense_b.front() = -ae.pca.basis.transpose() * ae.pca.mean;
  ae.dec.dense_w.back() = ae.pca.basis;
  ae.dec.dense_b.back() = ae.pca.mean;

  VecX flat_enc, flat_dec;
  pack_params(ae.enc, flat_enc);
  pack_params(ae.dec, flat_dec);
  AdamState adam_enc = AdamState::create(flat_enc.size(), cfg.lr);
  AdamState adam_dec = AdamState::create(flat_dec.size(), cfg.lr);

  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainReport report;
  report.seed = cfg.seed;
  const VecX var_scale = ae.in_std.cwiseProduct(ae.in_std);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    adam_enc.lr = adam_dec.lr = cfg.lr * (cfg.lr_decay + (1.0 - cfg.lr_decay) * (1.0 - frac));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int at = 0; at < n; at += cfg.batch) {
      const int bsz = std::min(cfg.batch, n - at);
      if (bsz < 2) continue;  // batchnorm needs >= 2 samples
      MatX x(dim, bsz);
      for (int c = 0; c < bsz; ++c) x.col(c) = u.col(order[at + c]);

      MlpCache enc_cache, dec_cache;
      MatX z = forward(ae.enc_spec, ae.enc, x, PassMode::Train, &enc_cache);
      MatX y = forward(ae.dec_spec, ae.dec, z, PassMode::Train, &dec_cache);

      // squared error in metric (relative) units
      MatX diff = y - x;
      MatX diff_scaled = (diff.array().colwise() * var_scale.array()).matrix();
      const double loss = diff.cwiseProduct(diff_scaled).sum() / bsz;
      epoch_loss += loss;
      ++batches;
      if (!std::isfinite(loss))
        throw Error(ErrorCode::DivergedLoss, "autoencoder loss is not finite at epoch " +
                                                 std::to_string(epoch));

      MatX dy = (2.0 / bsz) * diff_scaled;
      MlpGrads dec_grads = zero_grads_like(ae.dec);
      MatX dz = backward(ae.dec_spec, ae.dec, dec_cache, dy, dec_grads);
      MlpGrads enc_grads = zero_grads_like(ae.enc);
      backward(ae.enc_spec, ae.enc, enc_cache, dz, enc_grads);

      VecX g;
      pack_params(ae.enc, flat_enc);
      pack_grads(enc_grads, g);
      adam_step(flat_enc, g, adam_enc);
      unpack_params(flat_enc, ae.enc);

      pack_params(ae.dec, flat_dec);
      pack_grads(dec_grads, g);
      adam_step(flat_dec, g, adam_dec);
      unpack_params(flat_dec, ae.dec);
    }
    report.total.push_back(batches ? epoch_loss / batches : 0.0);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(ae), std::move(report)};
}

namespace {

json encoding_to_json(const RelativeEncoding& enc) {
  json j;
  j["mode"] = enc.mode == RelativeEncoding::Mode::RootRelative ? "root" : "dirichlet-mean";
  j["num_vertices"] = enc.num_vertices;
  j["anchors"] = enc.anchors;
  j["encoded_verts"] = enc.encoded_verts;
  j["anchor_of"] = enc.anchor_of;
  j["anchor_slot"] = enc.anchor_slot;
  return j;
}

RelativeEncoding encoding_from_json(const json& j) {
  RelativeEncoding enc;
  enc.mode = j.at("mode") == "root" ? RelativeEncoding::Mode::RootRelative
                                    : RelativeEncoding::Mode::DirichletMeanRelative;
  enc.num_vertices = j.at("num_vertices");
  enc.anchors = j.at("anchors").get<std::vector<int>>();
  enc.encoded_verts = j.at("encoded_verts").get<std::vector<int>>();
  enc.anchor_of = j.at("anchor_of").get<std::vector<int>>();
  enc.anchor_slot = j.at("anchor_slot").get<std::vector<int>>();
  return enc;
}

}  // namespace

void save_autoencoder(const std::string& path, const AutoencoderWeights& ae) {
  CheckpointWriter w;
  w.add_mlp("enc", ae.enc);
  w.add_mlp("dec", ae.dec);
  w.add("pca.mean", ae.pca.mean);
  w.add("pca.basis", ae.pca.basis);
  w.add("pca.singular_values", ae.pca.singular_values);
  w.add("in_mean", ae.in_mean);
  w.add("in_std", ae.in_std);

  json meta;
  meta["enc_spec"] = json::parse(mlp_spec_to_json(ae.enc_spec));
  meta["dec_spec"] = json::parse(mlp_spec_to_json(ae.dec_spec));
  meta["latent_dim"] = ae.latent_dim;
  meta["encoding"] = encoding_to_json(ae.encoding);
  meta["pca_rank_deficient"] = ae.pca.rank_deficient;
  w.write(path, "autoencoder", meta.dump());
}

AutoencoderWeights load_autoencoder(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.kind != "autoencoder")
    throw Error(ErrorCode::FormatVersionMismatch, "checkpoint kind is " + ck.kind);
  json meta = json::parse(ck.meta_json);
  AutoencoderWeights ae;
  ae.enc_spec = mlp_spec_from_json(meta.at("enc_spec").dump());
  ae.dec_spec = mlp_spec_from_json(meta.at("dec_spec").dump());
  ae.latent_dim = meta.at("latent_dim");
  ae.encoding = encoding_from_json(meta.at("encoding"));
  ae.enc = ck.mlp("enc", ae.enc_spec);
  ae.dec = ck.mlp("dec", ae.dec_spec);
  ae.pca.mean = ck.vec("pca.mean");
  ae.pca.basis = ck.mat("pca.basis");
  ae.pca.singular_values = ck.vec("pca.singular_values");
  ae.pca.rank_deficient = meta.value("pca_rank_deficient", false);
  ae.in_mean = ck.vec("in_mean");
  ae.in_std = ck.vec("in_std");
  return ae;
}

}  // namespace subdyn
