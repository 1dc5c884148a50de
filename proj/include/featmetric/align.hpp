#pragma once

#include <optional>
#include <vector>

#include "featmetric/featurenet.hpp"
#include "featmetric/losses.hpp"
#include "featmetric/synth.hpp"

namespace featmetric {

enum class PoseOptimizer { GradientDescent, GaussNewton };

/// Convergence tolerances shared by the optimizers and basin probes.
inline constexpr double kDepthTolRel = 0.01;            // 1% relative depth
inline constexpr double kRotTol = 0.1 * M_PI / 180.0;   // 0.1 degrees
inline constexpr double kTransTolFrac = 0.005;          // 0.5% of median depth

struct AlignOptions {
  int pyramid_levels = 3;
  PoseOptimizer optimizer = PoseOptimizer::GaussNewton;
  int max_iters = 60;
  double tol = 1e-7;        // step-norm termination for pose
  double depth_step = 2.0;  // initial log-depth step scale
  double grad_tol = 1e-4;   // per-pixel early stop on |d loss / d log depth|
  size_t source_index = 0;  // source whose pose is optimized
};

/// A rendered pair plus everything precomputed for alignment: the image
/// pyramid, per-level intrinsics and, when a feature provider is present,
/// per-level encoder feature maps. The loss configuration fixes which arm
/// (photometric / feature-metric) the optimizers and probes evaluate;
/// optimization always runs on the L1-only objective (use_ssim is forced off).
class AlignProblem {
 public:
  struct Level {
    Intrinsics intrinsics;
    RasterMap depth;
    ViewBundle target;
    std::vector<ViewBundle> sources;
  };

  static AlignProblem build(RenderedPair pair, LossConfig cfg,
                            const AutoencoderParams* feature_provider, int pyramid_levels);

  const RenderedPair& pair() const { return pair_; }
  const LossConfig& config() const { return cfg_; }
  int levels() const { return static_cast<int>(levels_.size()); }
  const Level& level(int i) const { return levels_[static_cast<size_t>(i)]; }
  bool has_features() const { return has_features_; }
  double median_depth() const { return median_depth_; }

 private:
  RenderedPair pair_;
  LossConfig cfg_;
  std::vector<Level> levels_;
  bool has_features_ = false;
  double median_depth_ = 0.0;
};

struct TraceRow {
  int level = 0;
  int iter = 0;
  double lambda = 0.0;  // LM damping, or step length for descent modes
  double loss_before = 0.0;
  double loss_after = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct PoseResult {
  Pose pose;
  std::vector<TraceRow> trace;
};

/// Coarse-to-fine minimization of the cross-view objective over the pose of
/// one source, ground-truth depth held fixed. Gauss-Newton runs
/// Levenberg-damped normal equations on the per-pixel residuals (lambda 1e-3,
/// x10 on a failed step, x0.1 on success); gradient descent runs normalized
/// steepest descent with backtracking on the L1 objective. Every accepted
/// step strictly decreases the objective.
PoseResult optimize_pose(const AlignProblem& problem, const Pose& init,
                         const AlignOptions& opts);

struct DepthResult {
  RasterMap depth;
  std::vector<TraceRow> trace;
};

/// Per-pixel gradient descent in log-depth (d <- d*exp(-step*d*dL/dd)) with
/// ground-truth pose held fixed, full resolution. Pixels stop early once
/// |d loss/d log depth| < grad_tol; proposed steps that do not decrease the
/// pixel's loss shrink its step. Depth stays positive by construction.
DepthResult optimize_depth(const AlignProblem& problem, const RasterMap& init_depth,
                           const AlignOptions& opts);

/// Single-pixel variant used by basin probes; returns the final depth.
double optimize_depth_pixel(const AlignProblem& problem, int px, int py, double init_depth,
                            const AlignOptions& opts);

struct LandscapeRow {
  double depth = 0.0;
  double loss_ph = 0.0;  // full photometric (L1+SSIM) at the probed pixel
  double loss_fm = 0.0;  // feature L1 at the probed pixel (0 without features)
};

/// Sweeps the probed pixel's depth across [lo,hi] at fixed ground-truth pose
/// and reports the single-pixel losses of both arms (min over sources).
std::vector<LandscapeRow> landscape_probe(const AlignProblem& problem, int px, int py,
                                          double lo, double hi, int samples);

struct BasinReport {
  double sweep_lo = 0.0;   // init factors relative to ground truth
  double sweep_hi = 0.0;
  std::vector<double> init_factors;
  std::vector<double> final_values;
  std::vector<std::uint8_t> converged;
  double width = 0.0;      // widest contiguous converging interval, factor units
};

/// Runs the single-pixel depth optimizer from every sweep initialization
/// d0 = factor * gt and reports which initializations converge to within
/// tol_rel of the true depth.
BasinReport basin_measure_depth(const AlignProblem& problem, int px, int py, double lo_factor,
                                double hi_factor, int samples, double tol_rel,
                                const AlignOptions& opts);

/// Pose-ray variant: initializations compose(s * ray, gt) for s in [lo,hi].
BasinReport basin_measure_pose(const AlignProblem& problem,
                               const Eigen::Matrix<double, 6, 1>& ray, double lo, double hi,
                               int samples, double tol_rot, double tol_trans,
                               const AlignOptions& opts);

}  // namespace featmetric
