#include "featmetric/align.hpp"

#include <algorithm>
#include <cmath>

namespace featmetric {

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) throw EmptyMask("median_of: empty set");
  size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid) - 1, values.end());
  return 0.5 * (hi + values[mid - 1]);
}

LossConfig l1_only(LossConfig cfg) {
  cfg.use_ssim = false;
  return cfg;
}

}  // namespace

AlignProblem AlignProblem::build(RenderedPair pair, LossConfig cfg,
                                 const AutoencoderParams* feature_provider, int pyramid_levels) {
  if (pyramid_levels < 1) throw InvalidConfig("AlignProblem: pyramid_levels must be >= 1");
  if (cfg.use_feature_metric && feature_provider == nullptr)
    throw InvalidConfig("AlignProblem: feature-metric arm requires a feature provider");

  AlignProblem problem;
  problem.pair_ = std::move(pair);
  problem.cfg_ = l1_only(cfg);
  problem.has_features_ = feature_provider != nullptr;

  std::vector<double> depths(problem.pair_.gt_depth.data().data(),
                             problem.pair_.gt_depth.data().data() +
                                 problem.pair_.gt_depth.data().size());
  problem.median_depth_ = median_of(std::move(depths));

  RasterMap target = problem.pair_.target_image;
  RasterMap depth = problem.pair_.gt_depth;
  std::vector<RasterMap> sources = problem.pair_.source_images;
  Intrinsics K = problem.pair_.intrinsics;
  for (int l = 0; l < pyramid_levels; ++l) {
    if (l > 0) {
      if (target.width() < 16 || target.height() < 16) break;  // keep coarsest useful
      target = downsample2(target);
      depth = downsample2(depth);
      for (auto& s : sources) s = downsample2(s);
      K = intrinsics_scale(K, 0.5);
    }
    Level level;
    level.intrinsics = K;
    level.depth = depth;
    level.target.image = target;
    if (feature_provider) level.target.features = encode(*feature_provider, target);
    for (const auto& s : sources) {
      ViewBundle b;
      b.image = s;
      if (feature_provider) b.features = encode(*feature_provider, s);
      level.sources.push_back(std::move(b));
    }
    problem.levels_.push_back(std::move(level));
  }
  return problem;
}

namespace {

// Single-pixel L1 objective: min over sources of the configured terms.
struct PixelEval {
  double value = 0.0;
  int argmin = -1;
};

PixelEval eval_pixel(const AlignProblem::Level& lv, const LossConfig& cfg,
                     const std::vector<RigidTransform>& transforms, int x, int y, double d) {
  PixelEval out;
  double best = std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < lv.sources.size(); ++s) {
    WarpResult wr = warp(lv.intrinsics, x, y, d, transforms[s]);
    if (!wr.valid) continue;
    SampleResult img = bilinear_sample(lv.sources[s].image, wr.u, wr.v);
    if (!img.valid) continue;
    double value = 0.0;
    if (cfg.use_photometric) {
      const double wc = cfg.l1_weight / lv.target.image.channels();
      for (int c = 0; c < lv.target.image.channels(); ++c)
        value += wc * std::abs(img.value[c] - lv.target.image.at(x, y, c));
    }
    if (cfg.use_feature_metric) {
      SampleResult ft = bilinear_sample(*lv.sources[s].features, wr.u, wr.v);
      for (int c = 0; c < lv.target.features->channels(); ++c)
        value += std::abs(ft.value[c] - lv.target.features->at(x, y, c));
    }
    if (value < best) {
      best = value;
      out.argmin = static_cast<int>(s);
    }
  }
  out.value = best;
  return out;
}

// Same dead-banded L1 subgradient as the losses module.
double sign0(double x) { return x > 1e-12 ? 1.0 : (x < -1e-12 ? -1.0 : 0.0); }

// d(pixel objective)/d(depth) through the argmin source.
double grad_pixel_depth(const AlignProblem::Level& lv, const LossConfig& cfg,
                        const std::vector<RigidTransform>& transforms, int x, int y, double d,
                        int argmin) {
  const RigidTransform& g = transforms[static_cast<size_t>(argmin)];
  WarpResult wr = warp(lv.intrinsics, x, y, d, g);
  Eigen::Vector2d guv = Eigen::Vector2d::Zero();
  if (cfg.use_photometric) {
    SampleResult img = bilinear_sample(lv.sources[static_cast<size_t>(argmin)].image, wr.u, wr.v);
    const double wc = cfg.l1_weight / lv.target.image.channels();
    for (int c = 0; c < lv.target.image.channels(); ++c) {
      double sg = sign0(img.value[c] - lv.target.image.at(x, y, c));
      guv.x() += wc * sg * img.d_du[c];
      guv.y() += wc * sg * img.d_dv[c];
    }
  }
  if (cfg.use_feature_metric) {
    SampleResult ft =
        bilinear_sample(*lv.sources[static_cast<size_t>(argmin)].features, wr.u, wr.v);
    for (int c = 0; c < lv.target.features->channels(); ++c) {
      double sg = sign0(ft.value[c] - lv.target.features->at(x, y, c));
      guv.x() += sg * ft.d_du[c];
      guv.y() += sg * ft.d_dv[c];
    }
  }
  return guv.dot(warp_jacobian_depth(lv.intrinsics, x, y, d, g));
}

// Mean L1 objective over the whole level for one source pose.
double level_loss_single_source(const AlignProblem::Level& lv, const LossConfig& cfg,
                                const Pose& pose, size_t source_index) {
  std::vector<ViewBundle> sources{lv.sources[source_index]};
  LossReport report = cross_view_loss(lv.target, sources, lv.intrinsics, lv.depth, {pose}, cfg);
  return report.total;
}

// Levenberg-damped normal equations for the per-pixel residuals of one
// source. Residuals: feature channels weight 1, image channels weight
// sqrt(l1_weight / C). Returns mean squared residual.
struct GnSystem {
  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  double loss = 0.0;
  long n_valid = 0;
};

GnSystem gn_accumulate(const AlignProblem::Level& lv, const LossConfig& cfg, const Pose& pose,
                       size_t source_index, bool with_system) {
  GnSystem sys;
  RigidTransform g = pose_exp(pose);
  const ViewBundle& src = lv.sources[source_index];
  const double img_w = std::sqrt(cfg.l1_weight / lv.target.image.channels());
  for (int y = 0; y < lv.depth.height(); ++y)
    for (int x = 0; x < lv.depth.width(); ++x) {
      WarpResult wr = warp(lv.intrinsics, x, y, lv.depth.at(x, y), g);
      if (!wr.valid) continue;
      SampleResult img = bilinear_sample(src.image, wr.u, wr.v);
      if (!img.valid) continue;
      PoseJacobian jp;
      if (with_system) jp = warp_jacobian_pose(lv.intrinsics, x, y, lv.depth.at(x, y), g);
      auto add_residual = [&](double r, double du, double dv, double w) {
        sys.loss += w * w * r * r;
        if (!with_system) return;
        Eigen::Matrix<double, 1, 6> j = w * (du * jp.row(0) + dv * jp.row(1));
        sys.h += j.transpose() * j;
        sys.b += j.transpose() * (w * r);
      };
      if (cfg.use_photometric)
        for (int c = 0; c < lv.target.image.channels(); ++c)
          add_residual(img.value[c] - lv.target.image.at(x, y, c), img.d_du[c], img.d_dv[c],
                       img_w);
      if (cfg.use_feature_metric) {
        SampleResult ft = bilinear_sample(*src.features, wr.u, wr.v);
        for (int c = 0; c < lv.target.features->channels(); ++c)
          add_residual(ft.value[c] - lv.target.features->at(x, y, c), ft.d_du[c], ft.d_dv[c],
                       1.0);
      }
      ++sys.n_valid;
    }
  if (sys.n_valid == 0) throw EmptyValidSet("optimize_pose: no valid pixels at this level");
  sys.loss /= static_cast<double>(sys.n_valid);
  sys.h /= static_cast<double>(sys.n_valid);
  sys.b /= static_cast<double>(sys.n_valid);
  return sys;
}

Pose apply_step(const Eigen::Matrix<double, 6, 1>& delta, const Pose& pose) {
  Pose step;
  step.axis_angle = delta.head<3>();
  step.translation = delta.tail<3>();
  return pose_compose(step, pose);
}

}  // namespace

PoseResult optimize_pose(const AlignProblem& problem, const Pose& init,
                         const AlignOptions& opts) {
  if (opts.source_index >= problem.pair().source_images.size())
    throw InvalidConfig("optimize_pose: source index out of range");
  PoseResult result;
  result.pose = init;
  const LossConfig& cfg = problem.config();

  for (int l = problem.levels() - 1; l >= 0; --l) {
    const AlignProblem::Level& lv = problem.level(l);
    if (opts.optimizer == PoseOptimizer::GaussNewton) {
      double lambda = 1e-3;
      for (int iter = 0; iter < opts.max_iters; ++iter) {
        GnSystem sys = gn_accumulate(lv, cfg, result.pose, opts.source_index, true);
        if (!std::isfinite(sys.loss)) throw Diverged("optimize_pose: non-finite loss");
        Eigen::Matrix<double, 6, 6> damped =
            sys.h + lambda * Eigen::Matrix<double, 6, 6>::Identity();
        Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-sys.b);
        double step_norm = delta.norm();
        if (!std::isfinite(step_norm) || step_norm < opts.tol) {
          result.trace.push_back({l, iter, lambda, sys.loss, sys.loss, step_norm, false});
          break;
        }
        Pose candidate = apply_step(delta, result.pose);
        double new_loss = gn_accumulate(lv, cfg, candidate, opts.source_index, false).loss;
        bool accepted = std::isfinite(new_loss) && new_loss < sys.loss;
        result.trace.push_back({l, iter, lambda, sys.loss, accepted ? new_loss : sys.loss,
                                step_norm, accepted});
        if (accepted) {
          result.pose = candidate;
          lambda = std::max(lambda * 0.1, 1e-12);
          if (step_norm < opts.tol) break;
        } else {
          lambda *= 10.0;
          if (lambda > 1e10) break;
        }
      }
    } else {
      // Normalized steepest descent with backtracking on the L1 objective.
      double step = 0.01;
      for (int iter = 0; iter < opts.max_iters; ++iter) {
        std::vector<ViewBundle> sources{lv.sources[opts.source_index]};
        Eigen::Matrix<double, 6, 1> g = cross_view_grad_pose(
            lv.target, sources, lv.intrinsics, lv.depth, {result.pose}, cfg, 0);
        double gnorm = g.norm();
        double loss = level_loss_single_source(lv, cfg, result.pose, opts.source_index);
        if (!std::isfinite(loss)) throw Diverged("optimize_pose: non-finite loss");
        if (gnorm < 1e-14) {
          result.trace.push_back({l, iter, step, loss, loss, 0.0, false});
          break;
        }
        Eigen::Matrix<double, 6, 1> dir = -g / gnorm;
        bool accepted = false;
        double used = step;
        for (int k = 0; k < 40; ++k) {
          Pose candidate = apply_step(used * dir, result.pose);
          double new_loss = level_loss_single_source(lv, cfg, candidate, opts.source_index);
          if (std::isfinite(new_loss) && new_loss < loss) {
            result.trace.push_back({l, iter, used, loss, new_loss, used, true});
            result.pose = candidate;
            accepted = true;
            break;
          }
          used *= 0.5;
        }
        if (!accepted) {
          result.trace.push_back({l, iter, used, loss, loss, used, false});
          break;
        }
        step = std::min(used * 1.5, 0.1);
        if (used < opts.tol) break;
      }
    }
  }
  return result;
}

DepthResult optimize_depth(const AlignProblem& problem, const RasterMap& init_depth,
                           const AlignOptions& opts) {
  const AlignProblem::Level& lv = problem.level(0);
  if (!init_depth.same_dims(lv.depth) || init_depth.channels() != 1)
    throw ShapeMismatch("optimize_depth: init depth shape mismatch");
  if (init_depth.data().minCoeff() <= 0.0)
    throw NonPositiveDepth("optimize_depth: init depth must be positive");
  const LossConfig& cfg = problem.config();

  std::vector<RigidTransform> transforms;
  for (const auto& p : problem.pair().gt_poses) transforms.push_back(pose_exp(p));

  const int w = lv.depth.width();
  const int h = lv.depth.height();
  DepthResult result;
  result.depth = init_depth;
  std::vector<double> pixel_step(static_cast<size_t>(w) * h, opts.depth_step);
  std::vector<double> value(static_cast<size_t>(w) * h, 0.0);
  std::vector<int> argmin(static_cast<size_t>(w) * h, -1);

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    double total_before = 0.0;
    long n_valid = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        PixelEval pe = eval_pixel(lv, cfg, transforms, x, y, result.depth.at(x, y));
        size_t i = static_cast<size_t>(y) * w + x;
        argmin[i] = pe.argmin;
        value[i] = pe.value;
        if (pe.argmin >= 0) {
          total_before += pe.value;
          ++n_valid;
        }
      }
    if (n_valid == 0) throw EmptyValidSet("optimize_depth: no valid pixels");
    if (!std::isfinite(total_before)) throw Diverged("optimize_depth: non-finite loss");

    long moved = 0;
    double total_after = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        size_t i = static_cast<size_t>(y) * w + x;
        if (argmin[i] < 0) continue;
        double d = result.depth.at(x, y);
        double g = grad_pixel_depth(lv, cfg, transforms, x, y, d, argmin[i]);
        double g_log = d * g;
        if (std::abs(g_log) < opts.grad_tol) {
          total_after += value[i];
          continue;
        }
        double arg = std::clamp(pixel_step[i] * g_log, -0.7, 0.7);
        double proposed = d * std::exp(-arg);
        PixelEval pe = eval_pixel(lv, cfg, transforms, x, y, proposed);
        if (pe.argmin >= 0 && pe.value < value[i]) {
          result.depth.at(x, y) = proposed;
          pixel_step[i] = std::min(pixel_step[i] * 1.3, opts.depth_step * 64.0);
          total_after += pe.value;
          ++moved;
        } else {
          pixel_step[i] = std::max(pixel_step[i] * 0.5, 1e-12);
          total_after += value[i];
        }
      }
    result.trace.push_back({0, iter, 0.0, total_before / n_valid, total_after / n_valid, 0.0,
                            moved > 0});
    if (moved == 0 && iter > 0) break;
  }
  return result;
}

double optimize_depth_pixel(const AlignProblem& problem, int px, int py, double init_depth,
                            const AlignOptions& opts) {
  const AlignProblem::Level& lv = problem.level(0);
  if (px < 0 || py < 0 || px >= lv.depth.width() || py >= lv.depth.height())
    throw InvalidPixel("optimize_depth_pixel: pixel out of range");
  if (!(init_depth > 0.0)) throw NonPositiveDepth("optimize_depth_pixel: init must be positive");
  const LossConfig& cfg = problem.config();
  std::vector<RigidTransform> transforms;
  for (const auto& p : problem.pair().gt_poses) transforms.push_back(pose_exp(p));

  double d = init_depth;
  double step = opts.depth_step;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    PixelEval pe = eval_pixel(lv, cfg, transforms, px, py, d);
    if (pe.argmin < 0) break;  // stranded outside every source: leave unchanged
    double g_log = d * grad_pixel_depth(lv, cfg, transforms, px, py, d, pe.argmin);
    if (std::abs(g_log) < opts.grad_tol) break;
    double arg = std::clamp(step * g_log, -0.7, 0.7);
    double proposed = d * std::exp(-arg);
    PixelEval next = eval_pixel(lv, cfg, transforms, px, py, proposed);
    if (next.argmin >= 0 && next.value < pe.value) {
      d = proposed;
      step = std::min(step * 1.3, opts.depth_step * 64.0);
    } else {
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }
  return d;
}

std::vector<LandscapeRow> landscape_probe(const AlignProblem& problem, int px, int py,
                                          double lo, double hi, int samples) {
  const AlignProblem::Level& lv = problem.level(0);
  if (px < 0 || py < 0 || px >= lv.depth.width() || py >= lv.depth.height())
    throw InvalidPixel("landscape_probe: pixel out of range");
  if (samples < 3) throw InvalidConfig("landscape_probe: samples must be >= 3");
  if (!(lo > 0.0) || !(hi > lo)) throw InvalidConfig("landscape_probe: bad depth range");

  LossConfig ph_cfg = problem.config();
  ph_cfg.use_photometric = true;
  ph_cfg.use_feature_metric = false;
  ph_cfg.use_ssim = true;  // full photometric values for the probe
  LossConfig fm_cfg = problem.config();
  fm_cfg.use_photometric = false;
  fm_cfg.use_feature_metric = problem.has_features();

  std::vector<LandscapeRow> rows;
  RasterMap depth = lv.depth;
  for (int i = 0; i < samples; ++i) {
    double d = lo + (hi - lo) * i / (samples - 1);
    depth.at(px, py) = d;
    LandscapeRow row;
    row.depth = d;
    {
      detail::CrossViewEval ev = detail::evaluate_cross_view(
          lv.target, lv.sources, lv.intrinsics, depth, problem.pair().gt_poses, ph_cfg);
      if (ev.argmin_source[static_cast<size_t>(py) * depth.width() + px] < 0)
        throw InvalidPixel("landscape_probe: pixel left the valid region during the sweep");
      row.loss_ph = ev.composite.at(px, py);
    }
    if (fm_cfg.use_feature_metric) {
      detail::CrossViewEval ev = detail::evaluate_cross_view(
          lv.target, lv.sources, lv.intrinsics, depth, problem.pair().gt_poses, fm_cfg);
      if (ev.argmin_source[static_cast<size_t>(py) * depth.width() + px] < 0)
        throw InvalidPixel("landscape_probe: pixel left the valid region during the sweep");
      row.loss_fm = ev.composite.at(px, py);
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

double longest_run_width(const std::vector<std::uint8_t>& converged, double spacing) {
  int best = 0, run = 0;
  for (auto c : converged) {
    run = c ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best > 1 ? (best - 1) * spacing : 0.0;
}

}  // namespace

BasinReport basin_measure_depth(const AlignProblem& problem, int px, int py, double lo_factor,
                                double hi_factor, int samples, double tol_rel,
                                const AlignOptions& opts) {
  if (samples < 1) throw InvalidConfig("basin_measure_depth: samples must be >= 1");
  if (!(lo_factor > 0.0) || !(hi_factor >= lo_factor))
    throw InvalidConfig("basin_measure_depth: bad sweep");
  const double gt = problem.pair().gt_depth.at(px, py);

  BasinReport report;
  report.sweep_lo = lo_factor;
  report.sweep_hi = hi_factor;
  for (int i = 0; i < samples; ++i) {
    double f = samples == 1 ? lo_factor
                            : lo_factor + (hi_factor - lo_factor) * i / (samples - 1);
    double final_d = optimize_depth_pixel(problem, px, py, f * gt, opts);
    bool ok = std::abs(final_d - gt) / gt < tol_rel;
    report.init_factors.push_back(f);
    report.final_values.push_back(final_d);
    report.converged.push_back(ok ? 1 : 0);
  }
  double spacing = samples > 1 ? (hi_factor - lo_factor) / (samples - 1) : 0.0;
  report.width = longest_run_width(report.converged, spacing);
  return report;
}

BasinReport basin_measure_pose(const AlignProblem& problem,
                               const Eigen::Matrix<double, 6, 1>& ray, double lo, double hi,
                               int samples, double tol_rot, double tol_trans,
                               const AlignOptions& opts) {
  if (samples < 1) throw InvalidConfig("basin_measure_pose: samples must be >= 1");
  const Pose& gt = problem.pair().gt_poses[opts.source_index];

  BasinReport report;
  report.sweep_lo = lo;
  report.sweep_hi = hi;
  for (int i = 0; i < samples; ++i) {
    double s = samples == 1 ? lo : lo + (hi - lo) * i / (samples - 1);
    Pose init = apply_step(s * ray, gt);
    PoseResult res = optimize_pose(problem, init, opts);
    Pose err = pose_compose(res.pose, pose_inverse(gt));
    double rot_err = pose_rotation_angle(err);
    double trans_err = err.translation.norm();
    bool ok = rot_err < tol_rot && trans_err < tol_trans;
    report.init_factors.push_back(s);
    report.final_values.push_back(std::max(rot_err / tol_rot, trans_err / tol_trans));
    report.converged.push_back(ok ? 1 : 0);
  }
  double spacing = samples > 1 ? (hi - lo) / (samples - 1) : 0.0;
  report.width = longest_run_width(report.converged, spacing);
  return report;
}

}  // namespace featmetric
