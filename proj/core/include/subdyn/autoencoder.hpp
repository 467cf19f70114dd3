#pragma once

#include "subdyn/checkpoint.hpp"
#include "subdyn/encoding.hpp"
#include "subdyn/pca.hpp"
#include "subdyn/scenario.hpp"

namespace subdyn {

struct TrainReport {
  std::vector<double> total, inertial, elastic, external, bc;  // per epoch
  std::vector<int> skipped_samples;  // decoded states outside an energy's domain
  double wall_seconds = 0.0;
  uint64_t seed = 0;

  std::string to_json_lines() const;
};

struct AutoencoderWeights {
  MlpSpec enc_spec, dec_spec;
  MlpWeights enc, dec;
  PcaBasis pca;  // fit on normalized relative coordinates
  VecX in_mean, in_std;
  RelativeEncoding encoding;
  int latent_dim = 0;
};

/// Encoder/decoder shapes: encoder hidden = [pca_dim, hidden...], decoder
/// mirrors it; residual blocks and batchnorm on, per-spec widths.
std::pair<MlpSpec, MlpSpec> make_autoencoder_specs(int input_dim, int pca_dim,
                                                   const std::vector<int>& hidden, int latent_dim);

/// z from an absolute frame (eval mode).
VecX ae_encode(const AutoencoderWeights& ae, const VecX& x_abs);
/// Relative coordinates from z (eval mode).
VecX ae_decode_relative(const AutoencoderWeights& ae, const VecX& z);
/// Absolute frame from z given the Dirichlet anchor positions.
VecX ae_decode(const AutoencoderWeights& ae, const VecX& z, const VecX& anchor_positions);

/// Batched latents (columns) for a whole sequence of absolute frames.
MatX ae_encode_batch(const AutoencoderWeights& ae, const MatX& frames_abs);

struct AeTrainConfig {
  int epochs = 20000;
  int batch = 500;
  double lr = 1e-4;
  double lr_decay = 1.0;  // final lr fraction, ramped linearly over epochs
  uint64_t seed = 1;
};

/// PCA-initialized autoencoder trained on the split's training frames with
/// mean squared reconstruction error over relative coordinates.
/// Throws DivergedLoss on a non-finite loss.
std::pair<AutoencoderWeights, TrainReport> train_autoencoder(
    const ScenarioSpec& spec, const ScenarioAssets& assets,
    const std::vector<StateSequence>& dataset, const AeTrainConfig& cfg);

void save_autoencoder(const std::string& path, const AutoencoderWeights& ae);
AutoencoderWeights load_autoencoder(const std::string& path);

/// Per-coordinate stats with a clamped std so constant coordinates stay finite.
void fit_normalization(const MatX& data, VecX& mean, VecX& std_dev);

}  // namespace subdyn
