#include "featmetric/losses.hpp"

#include <cmath>
#include <limits>

#include "featmetric/parallel.hpp"
#include "featmetric/raster_io.hpp"

namespace featmetric {

namespace {

// L1 subgradient with sign(0) = 0; a small dead band keeps rounding-level
// residuals (identity warps resample the map to ~1e-16) from injecting
// full-strength +/-1 signs.
double sign0(double x) { return x > 1e-12 ? 1.0 : (x < -1e-12 ? -1.0 : 0.0); }

void require_same_shape(const RasterMap& a, const RasterMap& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeMismatch(std::string(op) + ": shape mismatch");
}

void require_mask_dims(const RasterMap& a, const Mask& m, const char* op) {
  if (a.width() != m.width || a.height() != m.height)
    throw ShapeMismatch(std::string(op) + ": mask dimensions mismatch");
}

}  // namespace

RasterMap ssim(const RasterMap& a, const RasterMap& b, double c1, double c2) {
  require_same_shape(a, b, "ssim");
  const int w = a.width();
  const int h = a.height();
  RasterMap out(w, h, a.channels());
  for (int c = 0; c < a.channels(); ++c) {
    ConstPlaneRef pa = a.plane(c);
    ConstPlaneRef pb = b.plane(c);
    PlaneRef po = out.plane(c);
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - 1), y1 = std::min(h - 1, y + 1);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - 1), x1 = std::min(w - 1, x + 1);
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        int n = 0;
        for (int yy = y0; yy <= y1; ++yy)
          for (int xx = x0; xx <= x1; ++xx) {
            double va = pa(yy, xx), vb = pb(yy, xx);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
            ++n;
          }
        const double inv = 1.0 / n;
        const double mu_a = sa * inv, mu_b = sb * inv;
        const double var_a = saa * inv - mu_a * mu_a;
        const double var_b = sbb * inv - mu_b * mu_b;
        const double cov = sab * inv - mu_a * mu_b;
        po(y, x) = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
  }
  return out;
}

namespace {

// Per-pixel photometric value: l1_weight * mean_c|d| + ssim_weight * mean_c (1-S)/2.
RasterMap photometric_per_pixel(const RasterMap& target, const RasterMap& synthesized,
                                const LossConfig& cfg, RasterMap* l1_out = nullptr,
                                RasterMap* dssim_out = nullptr) {
  const int w = target.width();
  const int h = target.height();
  const double inv_c = 1.0 / target.channels();

  RasterMap l1(w, h, 1);
  l1.plane(0).setZero();
  for (int c = 0; c < target.channels(); ++c)
    l1.plane(0) += (target.plane(c) - synthesized.plane(c)).cwiseAbs();
  l1.plane(0) *= inv_c;

  RasterMap combined(w, h, 1);
  if (cfg.use_ssim) {
    RasterMap s = ssim(target, synthesized, cfg.ssim_c1, cfg.ssim_c2);
    RasterMap dssim(w, h, 1);
    dssim.plane(0).setZero();
    for (int c = 0; c < s.channels(); ++c)
      dssim.plane(0) += (1.0 - s.plane(c).array()).matrix() * 0.5;
    dssim.plane(0) *= inv_c;
    combined.plane(0) = cfg.l1_weight * l1.plane(0) + cfg.ssim_weight * dssim.plane(0);
    if (dssim_out) *dssim_out = std::move(dssim);
  } else {
    combined.plane(0) = cfg.l1_weight * l1.plane(0);
    if (dssim_out) *dssim_out = RasterMap(w, h, 1);
  }
  if (l1_out) *l1_out = std::move(l1);
  return combined;
}

}  // namespace

LossReport photometric_loss(const RasterMap& target, const RasterMap& synthesized,
                            const Mask& valid, const LossConfig& cfg) {
  require_same_shape(target, synthesized, "photometric_loss");
  require_mask_dims(target, valid, "photometric_loss");
  if (cfg.ssim_weight + cfg.l1_weight != 1.0 &&
      std::abs(cfg.ssim_weight + cfg.l1_weight - 1.0) > 1e-12)
    throw InvalidConfig("photometric_loss: ssim_weight + l1_weight must be 1");

  RasterMap l1, dssim;
  RasterMap combined = photometric_per_pixel(target, synthesized, cfg, &l1, &dssim);

  LossReport report;
  report.per_pixel = RasterMap(target.width(), target.height(), 1);
  double sum_l1 = 0, sum_dssim = 0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      if (!valid.at(x, y)) continue;
      report.per_pixel.at(x, y) = combined.at(x, y);
      sum_l1 += l1.at(x, y);
      sum_dssim += dssim.at(x, y);
      ++report.valid_count;
    }
  if (report.valid_count == 0) throw EmptyValidSet("photometric_loss: no valid pixels");
  report.per_term["l1"] = sum_l1 / report.valid_count;
  report.per_term["dssim"] = sum_dssim / report.valid_count;
  report.total = cfg.l1_weight * report.per_term["l1"] +
                 cfg.ssim_weight * report.per_term["dssim"];
  return report;
}

LossReport feature_metric_loss(const RasterMap& phi_target, const RasterMap& phi_warped,
                               const Mask& valid) {
  require_same_shape(phi_target, phi_warped, "feature_metric_loss");
  require_mask_dims(phi_target, valid, "feature_metric_loss");

  LossReport report;
  report.per_pixel = RasterMap(phi_target.width(), phi_target.height(), 1);
  double sum = 0;
  for (int y = 0; y < phi_target.height(); ++y)
    for (int x = 0; x < phi_target.width(); ++x) {
      if (!valid.at(x, y)) continue;
      double v = 0;
      for (int c = 0; c < phi_target.channels(); ++c)
        v += std::abs(phi_target.at(x, y, c) - phi_warped.at(x, y, c));
      report.per_pixel.at(x, y) = v;
      sum += v;
      ++report.valid_count;
    }
  if (report.valid_count == 0) throw EmptyValidSet("feature_metric_loss: no valid pixels");
  report.total = sum / report.valid_count;
  report.per_term["feature_metric"] = report.total;
  return report;
}

namespace detail {

CrossViewEval evaluate_cross_view(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                                  const Intrinsics& K, const RasterMap& depth,
                                  const std::vector<Pose>& poses, const LossConfig& cfg) {
  if (sources.empty()) throw InvalidConfig("cross_view: at least one source required");
  if (sources.size() != poses.size())
    throw InvalidConfig("cross_view: one pose per source required");
  if (depth.channels() != 1) throw ShapeMismatch("cross_view: depth must be single-channel");
  if (!target.image.same_dims(depth)) throw ShapeMismatch("cross_view: depth/image dims");
  if (cfg.use_feature_metric && !target.features)
    throw InvalidConfig("cross_view: feature-metric term requires feature maps");
  for (const auto& s : sources) {
    if (!s.image.same_shape(target.image)) throw ShapeMismatch("cross_view: source image shape");
    if (cfg.use_feature_metric) {
      if (!s.features) throw InvalidConfig("cross_view: source feature map missing");
      if (!s.features->same_shape(*target.features))
        throw ShapeMismatch("cross_view: feature map shape");
    }
  }
  if (!cfg.use_feature_metric && !cfg.use_photometric)
    throw InvalidConfig("cross_view: no loss terms enabled");

  const int w = target.image.width();
  const int h = target.image.height();
  const size_t ns = sources.size();
  const double inf = std::numeric_limits<double>::infinity();

  CrossViewEval ev;
  ev.width = w;
  ev.height = h;
  ev.source_valid.assign(ns, Mask(w, h, false));
  ev.synth_image.assign(ns, target.image);
  if (cfg.use_feature_metric) ev.synth_features.assign(ns, *target.features);
  ev.per_source_value.assign(ns, RasterMap(w, h, 1, inf));
  ev.argmin_source.assign(static_cast<size_t>(w) * h, -1);
  ev.composite = RasterMap(w, h, 1);
  ev.ph_at_argmin = RasterMap(w, h, 1);
  ev.fm_at_argmin = RasterMap(w, h, 1);

  std::vector<RigidTransform> transforms;
  transforms.reserve(ns);
  for (const auto& p : poses) transforms.push_back(pose_exp(p));

  // Synthesize each source in the target frame.
  for (size_t s = 0; s < ns; ++s) {
    parallel_rows(h, [&](int row_begin, int row_end) {
      for (int y = row_begin; y < row_end; ++y)
        for (int x = 0; x < w; ++x) {
          WarpResult wr = warp(K, x, y, depth.at(x, y), transforms[s]);
          if (!wr.valid) continue;
          SampleResult img = bilinear_sample(sources[s].image, wr.u, wr.v);
          if (!img.valid) continue;
          for (int c = 0; c < target.image.channels(); ++c)
            ev.synth_image[s].at(x, y, c) = img.value[c];
          if (cfg.use_feature_metric) {
            SampleResult ft = bilinear_sample(*sources[s].features, wr.u, wr.v);
            for (int c = 0; c < target.features->channels(); ++c)
              ev.synth_features[s].at(x, y, c) = ft.value[c];
          }
          ev.source_valid[s].set(x, y, true);
        }
    });
  }

  // Per-source per-pixel values; SSIM needs the full synthesized image.
  std::vector<RasterMap> ph_maps(ns), fm_maps(ns);
  for (size_t s = 0; s < ns; ++s) {
    if (cfg.use_photometric)
      ph_maps[s] = photometric_per_pixel(target.image, ev.synth_image[s], cfg);
    else
      ph_maps[s] = RasterMap(w, h, 1);
    fm_maps[s] = RasterMap(w, h, 1);
    if (cfg.use_feature_metric) {
      PlaneRef fm = fm_maps[s].plane(0);
      for (int c = 0; c < target.features->channels(); ++c)
        fm += (target.features->plane(c) - ev.synth_features[s].plane(c)).cwiseAbs();
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (ev.source_valid[s].at(x, y))
          ev.per_source_value[s].at(x, y) = ph_maps[s].at(x, y) + fm_maps[s].at(x, y);
  }

  // Min over sources, ties to the lowest index.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = inf;
      int best_s = -1;
      for (size_t s = 0; s < ns; ++s) {
        double v = ev.per_source_value[s].at(x, y);
        if (v < best) {
          best = v;
          best_s = static_cast<int>(s);
        }
      }
      if (best_s >= 0) {
        ev.argmin_source[static_cast<size_t>(y) * w + x] = best_s;
        ev.composite.at(x, y) = best;
        ev.ph_at_argmin.at(x, y) = ph_maps[static_cast<size_t>(best_s)].at(x, y);
        ev.fm_at_argmin.at(x, y) = fm_maps[static_cast<size_t>(best_s)].at(x, y);
        ++ev.n_valid;
      }
    }
  if (ev.n_valid == 0) throw EmptyValidSet("cross_view: no pixel valid in any source");
  return ev;
}

}  // namespace detail

LossReport cross_view_loss(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                           const Intrinsics& K, const RasterMap& depth,
                           const std::vector<Pose>& poses, const LossConfig& cfg) {
  detail::CrossViewEval ev = detail::evaluate_cross_view(target, sources, K, depth, poses, cfg);
  LossReport report;
  report.per_pixel = ev.composite;
  report.valid_count = ev.n_valid;
  report.per_term["photometric"] = ev.ph_at_argmin.data().sum() / ev.n_valid;
  report.per_term["feature_metric"] = ev.fm_at_argmin.data().sum() / ev.n_valid;
  report.total = report.per_term["photometric"] + report.per_term["feature_metric"];
  return report;
}

namespace {

// d(per-pixel L1 loss)/d(warped coordinate) at one pixel for one source:
// feature channel-sum plus photometric channel-mean weighted by l1_weight.
Eigen::Vector2d per_pixel_grad_uv(const ViewBundle& target, const ViewBundle& source, int x,
                                  int y, double wu, double wv, const LossConfig& cfg) {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  if (cfg.use_feature_metric) {
    SampleResult ft = bilinear_sample(*source.features, wu, wv);
    for (int c = 0; c < target.features->channels(); ++c) {
      double sg = sign0(ft.value[c] - target.features->at(x, y, c));
      g.x() += sg * ft.d_du[c];
      g.y() += sg * ft.d_dv[c];
    }
  }
  if (cfg.use_photometric) {
    SampleResult img = bilinear_sample(source.image, wu, wv);
    const double wc = cfg.l1_weight / target.image.channels();
    for (int c = 0; c < target.image.channels(); ++c) {
      double sg = sign0(img.value[c] - target.image.at(x, y, c));
      g.x() += wc * sg * img.d_du[c];
      g.y() += wc * sg * img.d_dv[c];
    }
  }
  return g;
}

void require_l1_only(const LossConfig& cfg, const char* op) {
  if (cfg.use_ssim)
    throw InvalidConfig(std::string(op) + ": analytic gradients require use_ssim=false");
}

}  // namespace

RasterMap cross_view_grad_depth(const ViewBundle& target, const std::vector<ViewBundle>& sources,
                                const Intrinsics& K, const RasterMap& depth,
                                const std::vector<Pose>& poses, const LossConfig& cfg) {
  require_l1_only(cfg, "cross_view_grad_depth");
  detail::CrossViewEval ev = detail::evaluate_cross_view(target, sources, K, depth, poses, cfg);
  std::vector<RigidTransform> transforms;
  for (const auto& p : poses) transforms.push_back(pose_exp(p));

  RasterMap grad(depth.width(), depth.height(), 1);
  const double inv_n = 1.0 / ev.n_valid;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      int s = ev.argmin_source[static_cast<size_t>(y) * depth.width() + x];
      if (s < 0) continue;
      WarpResult wr = warp(K, x, y, depth.at(x, y), transforms[static_cast<size_t>(s)]);
      Eigen::Vector2d guv =
          per_pixel_grad_uv(target, sources[static_cast<size_t>(s)], x, y, wr.u, wr.v, cfg);
      Eigen::Vector2d jd =
          warp_jacobian_depth(K, x, y, depth.at(x, y), transforms[static_cast<size_t>(s)]);
      grad.at(x, y) = inv_n * guv.dot(jd);
    }
  return grad;
}

Eigen::Matrix<double, 6, 1> cross_view_grad_pose(const ViewBundle& target,
                                                 const std::vector<ViewBundle>& sources,
                                                 const Intrinsics& K, const RasterMap& depth,
                                                 const std::vector<Pose>& poses,
                                                 const LossConfig& cfg, size_t source_index) {
  require_l1_only(cfg, "cross_view_grad_pose");
  if (source_index >= sources.size())
    throw InvalidConfig("cross_view_grad_pose: source index out of range");
  detail::CrossViewEval ev = detail::evaluate_cross_view(target, sources, K, depth, poses, cfg);
  RigidTransform g = pose_exp(poses[source_index]);

  Eigen::Matrix<double, 6, 1> acc = Eigen::Matrix<double, 6, 1>::Zero();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      int s = ev.argmin_source[static_cast<size_t>(y) * depth.width() + x];
      if (s != static_cast<int>(source_index)) continue;
      WarpResult wr = warp(K, x, y, depth.at(x, y), g);
      Eigen::Vector2d guv =
          per_pixel_grad_uv(target, sources[source_index], x, y, wr.u, wr.v, cfg);
      PoseJacobian jp = warp_jacobian_pose(K, x, y, depth.at(x, y), g);
      acc += jp.transpose() * guv;
    }
  return acc / ev.n_valid;
}

double smoothness_loss(const RasterMap& depth, const RasterMap& image, int order) {
  if (order != 1 && order != 2) throw InvalidConfig("smoothness_loss: order must be 1 or 2");
  if (depth.channels() != 1) throw ShapeMismatch("smoothness_loss: depth must be 1-channel");
  if (!depth.same_dims(image)) throw ShapeMismatch("smoothness_loss: dims mismatch");
  double mean = depth.data().mean();
  if (!(mean > 0.0)) throw NonPositiveMeanDepth("smoothness_loss: mean depth must be positive");

  RasterMap normalized(depth.width(), depth.height(), 1);
  normalized.data() = depth.data() / mean;
  RasterMap dpen = (order == 1) ? grad1(normalized) : grad2(normalized);
  RasterMap ipen = (order == 1) ? grad1(image) : grad2(image);
  RasterMap weight = channel_abs_sum(ipen);

  double total = 0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      total += std::exp(-weight.at(x, y)) * std::abs(dpen.at(x, y));
  return total;
}

double reconstruction_loss(const RasterMap& input, const std::vector<RasterMap>& reconstructions) {
  RasterMap level = input;
  double total = 0;
  for (size_t k = 0; k < reconstructions.size(); ++k) {
    if (k > 0) level = downsample2(level);
    if (!level.same_shape(reconstructions[k]))
      throw ScaleChainMismatch("reconstruction_loss: scale " + std::to_string(k) +
                               " does not match the downsample chain");
    double sum = 0;
    for (int c = 0; c < level.channels(); ++c)
      sum += (level.plane(c) - reconstructions[k].plane(c)).cwiseAbs().sum();
    total += sum / (static_cast<double>(level.width()) * level.height());
  }
  return total;
}

double discriminative_loss(const RasterMap& phi, const RasterMap& image) {
  if (!phi.same_dims(image)) throw ShapeMismatch("discriminative_loss: dims mismatch");
  RasterMap weight = channel_abs_sum(grad1(image));
  RasterMap mag = channel_abs_sum(grad1(phi));
  double total = 0;
  for (int y = 0; y < phi.height(); ++y)
    for (int x = 0; x < phi.width(); ++x)
      total -= std::exp(-weight.at(x, y)) * mag.at(x, y);
  return total;
}

double convergent_loss(const RasterMap& phi) {
  return channel_abs_sum(grad2(phi)).data().sum();
}

std::vector<std::vector<std::string>> loss_report_rows(const LossReport& report) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"kind", "name", "value"});
  for (const auto& [name, value] : report.per_term)
    rows.push_back({"term", name, format_double(value)});
  rows.push_back({"total", "total", format_double(report.total)});
  rows.push_back({"valid_count", "valid_count", std::to_string(report.valid_count)});
  return rows;
}

LossReport single_view_loss(const RasterMap& input, const std::vector<RasterMap>& reconstructions,
                            const RasterMap& phi, const LossConfig& cfg) {
  LossReport report;
  report.per_term["rec"] = reconstruction_loss(input, reconstructions);
  report.per_term["dis"] = discriminative_loss(phi, input);
  report.per_term["cvt"] = convergent_loss(phi);
  report.total = report.per_term["rec"] + cfg.alpha * report.per_term["dis"] +
                 cfg.beta * report.per_term["cvt"];
  report.valid_count = static_cast<long>(input.width()) * input.height();

  // Full-resolution integrand; coarser reconstruction scales contribute to
  // total only.
  report.per_pixel = RasterMap(input.width(), input.height(), 1);
  if (!reconstructions.empty() && reconstructions[0].same_shape(input)) {
    for (int c = 0; c < input.channels(); ++c)
      report.per_pixel.plane(0) +=
          (input.plane(c) - reconstructions[0].plane(c)).cwiseAbs();
    report.per_pixel.plane(0) /=
        static_cast<double>(input.width()) * input.height();
  }
  RasterMap iw = channel_abs_sum(grad1(input));
  RasterMap dmag = channel_abs_sum(grad1(phi));
  RasterMap cmag = channel_abs_sum(grad2(phi));
  for (int y = 0; y < input.height(); ++y)
    for (int x = 0; x < input.width(); ++x)
      report.per_pixel.at(x, y) += -cfg.alpha * std::exp(-iw.at(x, y)) * dmag.at(x, y) +
                                   cfg.beta * cmag.at(x, y);
  return report;
}

}  // namespace featmetric
