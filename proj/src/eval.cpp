#include "featmetric/eval.hpp"

#include <algorithm>
#include <cmath>

namespace featmetric {

namespace {

double median_of(std::vector<double> values) {
  size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid) - 1, values.end());
  return 0.5 * (hi + values[mid - 1]);
}

std::vector<double> masked_values(const RasterMap& map, const Mask& mask, const char* op) {
  if (map.width() != mask.width || map.height() != mask.height)
    throw ShapeMismatch(std::string(op) + ": mask dimensions mismatch");
  std::vector<double> out;
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (mask.at(x, y)) out.push_back(map.at(x, y));
  if (out.empty()) throw EmptyMask(std::string(op) + ": empty mask");
  return out;
}

}  // namespace

std::pair<RasterMap, double> median_scale(const RasterMap& pred, const RasterMap& gt,
                                          const Mask& mask) {
  if (!pred.same_shape(gt)) throw ShapeMismatch("median_scale: shape mismatch");
  std::vector<double> pv = masked_values(pred, mask, "median_scale");
  std::vector<double> gv = masked_values(gt, mask, "median_scale");
  for (double v : pv)
    if (!(v > 0.0)) throw NonPositiveDepth("median_scale: non-positive predicted depth");
  for (double v : gv)
    if (!(v > 0.0)) throw NonPositiveDepth("median_scale: non-positive ground-truth depth");
  double scale = median_of(std::move(gv)) / median_of(std::move(pv));
  RasterMap scaled = pred;
  scaled.data() *= scale;
  return {std::move(scaled), scale};
}

DepthMetrics depth_metrics(const RasterMap& pred, const RasterMap& gt, const Mask& mask,
                           double cap) {
  if (!pred.same_shape(gt)) throw ShapeMismatch("depth_metrics: shape mismatch");
  if (pred.width() != mask.width || pred.height() != mask.height)
    throw ShapeMismatch("depth_metrics: mask dimensions mismatch");

  DepthMetrics m;
  long n = 0;
  double se = 0.0, se_log = 0.0;
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  long d1 = 0, d2 = 0, d3 = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!mask.at(x, y)) continue;
      double p = pred.at(x, y);
      double g = gt.at(x, y);
      if (!(p > 0.0) || !(g > 0.0))
        throw NonPositiveDepth("depth_metrics: depths must be positive on the mask");
      p = std::min(p, cap);
      g = std::min(g, cap);
      double diff = g - p;
      m.abs_rel += std::abs(diff) / g;
      m.sq_rel += diff * diff / g;
      se += diff * diff;
      double dl = std::log(g) - std::log(p);
      se_log += dl * dl;
      double ratio = std::max(g / p, p / g);
      d1 += ratio < t1;
      d2 += ratio < t2;
      d3 += ratio < t3;
      ++n;
    }
  if (n == 0) throw EmptyMask("depth_metrics: empty mask");
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(se_log / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

OdometryMetrics odometry_metrics(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                                 const std::vector<double>& segment_lengths) {
  if (pred.size() != gt.size())
    throw InvalidConfig("odometry_metrics: trajectories must have equal length");
  if (pred.size() < 2) throw TrajectoryTooShort("odometry_metrics: need at least 2 poses");
  if (segment_lengths.empty())
    throw InvalidConfig("odometry_metrics: segment lengths must be nonempty");

  const size_t n = gt.size();
  std::vector<double> path(n, 0.0);  // cumulative ground-truth path length
  for (size_t i = 1; i < n; ++i)
    path[i] = path[i - 1] + (gt[i].translation - gt[i - 1].translation).norm();

  std::vector<RigidTransform> gt_t, pred_t;
  for (const auto& p : gt) gt_t.push_back(pose_exp(p));
  for (const auto& p : pred) pred_t.push_back(pose_exp(p));

  OdometryMetrics out;
  for (size_t start = 0; start + 1 < n; ++start) {
    for (double len : segment_lengths) {
      size_t end = start;
      while (end < n && path[end] - path[start] < len) ++end;
      if (end >= n) continue;

      // Relative-pose error between the segment endpoints.
      RigidTransform gt_rel = gt_t[start].inverse();
      gt_rel = RigidTransform{gt_rel.rotation * gt_t[end].rotation,
                              gt_rel.rotation * gt_t[end].translation + gt_rel.translation};
      RigidTransform pr_rel = pred_t[start].inverse();
      pr_rel = RigidTransform{pr_rel.rotation * pred_t[end].rotation,
                              pr_rel.rotation * pred_t[end].translation + pr_rel.translation};
      RigidTransform err{gt_rel.rotation.transpose() * pr_rel.rotation,
                         gt_rel.rotation.transpose() *
                             (pr_rel.translation - gt_rel.translation)};
      double seg_len = path[end] - path[start];
      SegmentError seg;
      seg.start = static_cast<int>(start);
      seg.length = seg_len;
      seg.t_err = err.translation.norm() / seg_len * 100.0;
      seg.r_err = pose_rotation_angle(pose_log(err)) * 180.0 / M_PI / seg_len;
      out.segments.push_back(seg);
    }
  }
  if (out.segments.empty())
    throw TrajectoryTooShort("odometry_metrics: no segment fits the trajectory");
  for (const auto& s : out.segments) {
    out.t_err += s.t_err;
    out.r_err += s.r_err;
  }
  out.t_err /= static_cast<double>(out.segments.size());
  out.r_err /= static_cast<double>(out.segments.size());
  return out;
}

std::pair<std::vector<Pose>, double> global_scale_align(const std::vector<Pose>& pred,
                                                        const std::vector<Pose>& gt) {
  if (pred.size() != gt.size())
    throw InvalidConfig("global_scale_align: trajectories must have equal length");
  if (pred.size() < 2) throw TrajectoryTooShort("global_scale_align: need at least 2 poses");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    num += pred[i].translation.dot(gt[i].translation);
    den += pred[i].translation.squaredNorm();
  }
  double s = den > 0.0 ? num / den : 1.0;
  std::vector<Pose> out = pred;
  for (auto& p : out) p.translation *= s;
  return {std::move(out), s};
}

}  // namespace featmetric
