#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "featmetric/losses.hpp"
#include "featmetric/raster.hpp"

namespace featmetric {

/// Desk-scale stand-in for a deep feature encoder: two 3x3 conv layers per
/// side, reflection padding, bounded activations.
struct ArchSpec {
  int in_channels = 1;
  int feature_channels = 16;
  int scales = 2;

  void validate() const;
};

struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  Eigen::VectorXd weights;  // [out][in][ky][kx], 3x3 kernels
  Eigen::VectorXd bias;     // [out]

  double& w(int co, int ci, int ky, int kx) {
    return weights[((static_cast<Eigen::Index>(co) * in_ch + ci) * 3 + ky) * 3 + kx];
  }
  double w(int co, int ci, int ky, int kx) const {
    return weights[((static_cast<Eigen::Index>(co) * in_ch + ci) * 3 + ky) * 3 + kx];
  }
};

struct AutoencoderParams {
  ArchSpec arch;
  ConvLayer enc1, enc2, dec1, dec2;

  /// Glorot-uniform weights (+/- sqrt(6/(fan_in+fan_out))), zero biases,
  /// deterministic in the seed.
  static AutoencoderParams init(const ArchSpec& arch, std::uint64_t seed);
  static AutoencoderParams zeros(const ArchSpec& arch);

  Eigen::Index parameter_count() const;
  Eigen::VectorXd to_vector() const;
  void from_vector(const Eigen::VectorXd& flat);
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  long steps = 1;
  std::uint64_t rng_seed = 0;
  LossConfig loss;
};

/// conv3x3 -> tanh -> conv3x3 -> tanh; F output channels, same spatial dims,
/// values in (-1,1).
RasterMap encode(const AutoencoderParams& params, const RasterMap& image);

/// One reconstruction per scale, each in (0,1): a shared conv3x3+tanh hidden
/// stage, box-downsampled per scale, then a shared conv3x3+logistic output.
std::vector<RasterMap> decode(const AutoencoderParams& params, const RasterMap& phi);

/// Value of the single-view loss rec + alpha*dis + beta*cvt and its exact
/// reverse-mode gradient w.r.t. every parameter, including the paths through
/// the first- and second-order feature stencils.
std::pair<LossReport, AutoencoderParams> loss_and_gradients(const AutoencoderParams& params,
                                                            const RasterMap& image,
                                                            const LossConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  static AdamState zeros(Eigen::Index n);
};

/// One Adam update with bias correction; returns the parameter delta to add.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& grads, const TrainConfig& cfg);

struct LossHistoryRow {
  long step = 0;
  double total = 0, rec = 0, dis = 0, cvt = 0;
};

struct TrainResult {
  AutoencoderParams params;
  AdamState adam;
  long total_steps = 0;
  std::vector<LossHistoryRow> history;
};

/// Full-batch Adam over the dataset. Deterministic given identical inputs;
/// aborts with Diverged if the loss goes non-finite. Pass the Adam state and
/// step counter from a checkpoint to resume seamlessly.
TrainResult train(AutoencoderParams params, const std::vector<RasterMap>& dataset,
                  const TrainConfig& cfg, const AdamState* resume_adam = nullptr,
                  long start_step = 0);

struct Checkpoint {
  AutoencoderParams params;
  AdamState adam;
  bool has_adam = false;
  long trained_steps = 0;
};

/// Versioned binary: magic FMAE1, ArchSpec header, little-endian float64
/// arrays (plus optimizer state so training can resume exactly).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

namespace detail {

/// 3x3 correlation with reflection padding (mirror across the edge pixel).
RasterMap conv3x3(const ConvLayer& layer, const RasterMap& input);
RasterMap conv3x3_backward_input(const ConvLayer& layer, const RasterMap& upstream);
void conv3x3_backward_params(const ConvLayer& layer, const RasterMap& input,
                             const RasterMap& upstream, ConvLayer& grad);

}  // namespace detail

}  // namespace featmetric
