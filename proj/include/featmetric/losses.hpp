#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "featmetric/geometry.hpp"
#include "featmetric/raster.hpp"

namespace featmetric {

struct LossConfig {
  double alpha = 1e-3;        // weight of the discriminative term
  double beta = 1e-3;         // weight of the convergent term
  double ssim_weight = 0.85;
  double l1_weight = 0.15;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  bool use_feature_metric = true;
  bool use_photometric = true;
  // The analytic cross-view gradients are closed-form for the L1 terms only;
  // they require use_ssim == false so the differentiated value matches
  // cross_view_loss exactly.
  bool use_ssim = true;
};

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> per_term;  // unweighted term values
  RasterMap per_pixel;                     // single channel; invalid pixels are 0
  long valid_count = 0;
};

/// CSV form of a report: header kind,name,value then one row per term plus
/// total and valid_count. The per-pixel map serializes separately as PFM.
std::vector<std::vector<std::string>> loss_report_rows(const LossReport& report);

/// Per-pixel per-channel SSIM from 3x3 box-filter local statistics (windows
/// truncated at borders). Inputs are assumed in [0,1].
RasterMap ssim(const RasterMap& a, const RasterMap& b, double c1 = 0.01 * 0.01,
               double c2 = 0.03 * 0.03);

/// Per-pixel l1_weight * L1 + ssim_weight * (1-SSIM)/2, channel means,
/// averaged over valid pixels. per_term carries the unweighted "l1" and
/// "dssim" means.
LossReport photometric_loss(const RasterMap& target, const RasterMap& synthesized,
                            const Mask& valid, const LossConfig& cfg = {});

/// Per-pixel channel-summed L1, mean over valid pixels.
LossReport feature_metric_loss(const RasterMap& phi_target, const RasterMap& phi_warped,
                               const Mask& valid);

/// One view of a cross-view problem: image plus (optionally) its feature map.
struct ViewBundle {
  RasterMap image;
  std::optional<RasterMap> features;
};

/// Cross-view reconstruction loss: every target pixel is warped into each
/// source by (depth, pose), per-source losses are formed from the configured
/// terms, and the per-pixel composite is the minimum over sources with a
/// valid sample (ties to the lowest source index). Pixels invalid in every
/// source are excluded; total is the mean over the rest.
LossReport cross_view_loss(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                           const Intrinsics& K, const RasterMap& depth,
                           const std::vector<Pose>& poses, const LossConfig& cfg);

/// d(total)/d(depth at p) per pixel, routed through each pixel's argmin
/// source. Requires cfg.use_ssim == false. Mean normalization (the 1/N factor
/// of cross_view_loss) is included, so values match finite differences of
/// cross_view_loss().total directly.
RasterMap cross_view_grad_depth(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                                const Intrinsics& K, const RasterMap& depth,
                                const std::vector<Pose>& poses, const LossConfig& cfg);

/// d(total)/d(twist of poses[source_index]), left-perturbation convention.
/// Pixels whose argmin is a different source contribute zero.
Eigen::Matrix<double, 6, 1> cross_view_grad_pose(const ViewBundle& target,
                                                 const std::vector<ViewBundle>& sources,
                                                 const Intrinsics& K, const RasterMap& depth,
                                                 const std::vector<Pose>& poses,
                                                 const LossConfig& cfg,
                                                 size_t source_index = 0);

/// Edge-weighted derivative penalty on mean-normalized depth:
/// sum_p exp(-|grad^i I|_1) * |grad^i (D/mean(D))|_1, order in {1,2}.
double smoothness_loss(const RasterMap& depth, const RasterMap& image, int order);

/// Sum over scales of the mean per-pixel (channel-summed) L1 between each
/// reconstruction and the input box-downsampled to its scale.
double reconstruction_loss(const RasterMap& input, const std::vector<RasterMap>& reconstructions);

/// -sum_p exp(-|grad1 I|_1) * |grad1 phi|_1; always <= 0.
double discriminative_loss(const RasterMap& phi, const RasterMap& image);

/// sum_p |grad2 phi|_1; zero exactly when the interior second-order stencil
/// vanishes everywhere.
double convergent_loss(const RasterMap& phi);

/// rec + alpha*dis + beta*cvt. per_term holds the unweighted values; per_pixel
/// is the full-resolution integrand (scale-0 reconstruction L1 plus weighted
/// regularizer densities).
LossReport single_view_loss(const RasterMap& input, const std::vector<RasterMap>& reconstructions,
                            const RasterMap& phi, const LossConfig& cfg);

namespace detail {

/// Shared per-source evaluation used by cross_view_loss and its gradients.
struct CrossViewEval {
  int width = 0;
  int height = 0;
  long n_valid = 0;
  std::vector<Mask> source_valid;            // warp+sample validity per source
  std::vector<RasterMap> synth_image;        // invalid pixels hold target values
  std::vector<RasterMap> synth_features;
  std::vector<RasterMap> per_source_value;   // 1ch per-pixel loss, inf when invalid
  std::vector<int> argmin_source;            // -1 when invalid in all sources
  RasterMap composite;                       // min over sources, 0 when invalid
  RasterMap ph_at_argmin;
  RasterMap fm_at_argmin;
};

CrossViewEval evaluate_cross_view(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                                  const Intrinsics& K, const RasterMap& depth,
                                  const std::vector<Pose>& poses, const LossConfig& cfg);

}  // namespace detail

}  // namespace featmetric
