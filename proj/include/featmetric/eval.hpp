#pragma once

#include <utility>
#include <vector>

#include "featmetric/geometry.hpp"
#include "featmetric/raster.hpp"

namespace featmetric {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

struct SegmentError {
  int start = 0;
  double length = 0.0;
  double t_err = 0.0;  // percent of segment length
  double r_err = 0.0;  // degrees per unit length
};

struct OdometryMetrics {
  double t_err = 0.0;
  double r_err = 0.0;
  std::vector<SegmentError> segments;
};

/// Rescales pred so its masked median matches the ground-truth median;
/// returns the scaled map and the applied scale median(gt)/median(pred).
std::pair<RasterMap, double> median_scale(const RasterMap& pred, const RasterMap& gt,
                                          const Mask& mask);

/// Standard depth metrics (abs rel, sq rel, RMSE, RMSE log, delta<1.25^t with
/// strict inequality). Both maps are clamped to cap before evaluation.
DepthMetrics depth_metrics(const RasterMap& pred, const RasterMap& gt, const Mask& mask,
                           double cap = 80.0);

/// Average relative-pose drift over all (start, segment-length) pairs where
/// the ground-truth path from the start reaches the requested length
/// (simplified-kitti protocol). Trajectories are camera-to-world poses.
OdometryMetrics odometry_metrics(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                                 const std::vector<double>& segment_lengths);

/// Single scalar s minimizing sum ||s*t_pred - t_gt||^2 applied to every
/// translation; rotations are untouched.
std::pair<std::vector<Pose>, double> global_scale_align(const std::vector<Pose>& pred,
                                                        const std::vector<Pose>& gt);

}  // namespace featmetric
