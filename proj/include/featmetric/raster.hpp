#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "featmetric/errors.hpp"

namespace featmetric {

using PlaneMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneRef = Eigen::Map<PlaneMatrix>;
using ConstPlaneRef = Eigen::Map<const PlaneMatrix>;

/// Dense H x W x C grid of doubles. Storage is planar: one contiguous
/// row-major H x W block per channel, so each channel is directly viewable
/// as an Eigen matrix. Serves as image (C=1 or 3), feature map (C=F) and
/// depth map (C=1).
class RasterMap {
 public:
  RasterMap() = default;
  RasterMap(int width, int height, int channels, double fill = 0.0);
  static RasterMap from_data(int width, int height, int channels, Eigen::VectorXd data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.size() == 0; }
  Eigen::Index size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  PlaneRef plane(int c) {
    return PlaneRef(data_.data() + static_cast<Eigen::Index>(c) * height_ * width_, height_, width_);
  }
  ConstPlaneRef plane(int c) const {
    return ConstPlaneRef(data_.data() + static_cast<Eigen::Index>(c) * height_ * width_, height_, width_);
  }

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }

  bool same_shape(const RasterMap& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_dims(const RasterMap& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  Eigen::Index index(int x, int y, int c) const {
    return (static_cast<Eigen::Index>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  Eigen::VectorXd data_;
};

/// Result of sampling a raster at a continuous location. `valid` is false
/// exactly when the 2x2 interpolation footprint leaves the grid; values and
/// derivatives are zero-filled in that case.
struct SampleResult {
  Eigen::VectorXd value;
  Eigen::VectorXd d_du;
  Eigen::VectorXd d_dv;
  bool valid = false;
};

/// Per-pixel validity flags with raster dimensions.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> flags;

  Mask() = default;
  Mask(int w, int h, bool value = false)
      : width(w), height(h), flags(static_cast<size_t>(w) * h, value ? 1 : 0) {}
  static Mask all_valid(int w, int h) { return Mask(w, h, true); }

  bool at(int x, int y) const { return flags[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { flags[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  long count() const {
    long n = 0;
    for (auto f : flags) n += f != 0;
    return n;
  }
};

struct GradPair {
  RasterMap gx;
  RasterMap gy;
};

/// Bilinear interpolation of the four surrounding pixels, returning the
/// interpolated value per channel together with the analytic derivatives of
/// the interpolant. Out-of-range coordinates are reported via valid=false,
/// never an exception. Exact integer coordinates on the far edge use the
/// footprint ending at that edge, so any u in [0,W-1], v in [0,H-1] is valid.
SampleResult bilinear_sample(const RasterMap& map, double u, double v);

/// First derivatives per channel: central differences in the interior,
/// one-sided at the borders. Requires width,height >= 3.
GradPair grad_xy(const RasterMap& map);

/// First-order operator dx + dy, per channel.
RasterMap grad1(const RasterMap& map);

/// Second-order operator dxx + 2*dxy + dyy, per channel. Central stencils on
/// the interior; the mixed term is the central difference of central
/// differences. The one-pixel border ring is left at zero.
RasterMap grad2(const RasterMap& map);

/// 2x2 box average to floor(W/2) x floor(H/2); trailing odd row/column is
/// dropped.
RasterMap downsample2(const RasterMap& map);

/// |.|_1 over channels: single-channel map of per-pixel channel-summed
/// absolute values.
RasterMap channel_abs_sum(const RasterMap& map);

}  // namespace featmetric
