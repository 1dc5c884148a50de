// featmetric: batch experiments for feature-metric vs photometric direct
// alignment on procedurally generated scenes.
//
// Subcommands: synth, train-features, align, landscape, eval, basin.
// Exit codes: 0 success, 1 runtime error, 2 usage error.
// stdout carries machine-readable CSV only; logs go to stderr.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <random>

#include "featmetric/align.hpp"
#include "featmetric/eval.hpp"
#include "featmetric/featurenet.hpp"
#include "featmetric/raster_io.hpp"
#include "featmetric/synth.hpp"

namespace fs = std::filesystem;
using namespace featmetric;

namespace {

std::string fmt(double v) { return format_double(v); }

RasterMap load_image(const fs::path& dir, const std::string& stem) {
  fs::path pfm = dir / (stem + ".pfm");
  if (fs::exists(pfm)) return read_pfm(pfm.string());
  fs::path pgm = dir / (stem + ".pgm");
  if (!fs::exists(pgm)) throw IoError("pair directory is missing " + stem + ".pfm/.pgm");
  RasterMap img = read_pgm(pgm.string());
  img.data() /= 255.0;
  return img;
}

std::vector<Pose> read_pose_rows(const std::string& path) {
  auto rows = read_csv(path);
  std::vector<Pose> poses;
  for (const auto& row : rows) {
    if (row.size() != 6) continue;
    try {
      Pose p;
      for (int i = 0; i < 3; ++i) p.axis_angle[i] = std::stod(row[static_cast<size_t>(i)]);
      for (int i = 0; i < 3; ++i) p.translation[i] = std::stod(row[static_cast<size_t>(i) + 3]);
      poses.push_back(p);
    } catch (const std::exception&) {
      // header or stray row
    }
  }
  if (poses.empty()) throw ParseError("no pose rows in " + path);
  return poses;
}

void write_pose_rows(const std::string& path, const std::vector<Pose>& poses) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"wx", "wy", "wz", "tx", "ty", "tz"});
  for (const auto& p : poses)
    rows.push_back({fmt(p.axis_angle.x()), fmt(p.axis_angle.y()), fmt(p.axis_angle.z()),
                    fmt(p.translation.x()), fmt(p.translation.y()), fmt(p.translation.z())});
  write_csv(path, rows);
}

RenderedPair load_pair(const std::string& dir_arg) {
  fs::path dir(dir_arg);
  RenderedPair pair;
  pair.target_image = load_image(dir, "target");
  pair.gt_depth = read_pfm((dir / "gt_depth.pfm").string());
  pair.gt_poses = read_pose_rows((dir / "poses.csv").string());
  for (size_t s = 0; s < pair.gt_poses.size(); ++s)
    pair.source_images.push_back(load_image(dir, "source_" + std::to_string(s)));

  auto k_rows = read_csv((dir / "intrinsics.csv").string());
  bool have_k = false;
  for (const auto& row : k_rows) {
    if (row.size() != 4) continue;
    try {
      pair.intrinsics = {std::stod(row[0]), std::stod(row[1]), std::stod(row[2]),
                         std::stod(row[3])};
      have_k = true;
    } catch (const std::exception&) {
    }
  }
  if (!have_k) throw ParseError("no intrinsics row in " + (dir / "intrinsics.csv").string());
  return pair;
}

void write_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"level", "iter", "lambda", "loss_before", "loss_after", "step_norm",
                  "accepted"});
  for (const auto& t : trace)
    rows.push_back({std::to_string(t.level), std::to_string(t.iter), fmt(t.lambda),
                    fmt(t.loss_before), fmt(t.loss_after), fmt(t.step_norm),
                    t.accepted ? "1" : "0"});
  write_csv(path, rows);
}

struct RangeSpec {
  double lo = 0.0, hi = 0.0;
  int n = 0;
};

RangeSpec parse_range(const std::string& text, const char* what) {
  RangeSpec r;
  if (std::sscanf(text.c_str(), "%lf:%lf:%d", &r.lo, &r.hi, &r.n) != 3)
    throw CLI::ValidationError(std::string(what) + " must be lo:hi:n");
  return r;
}

// Deterministic unit-ish direction from a seed, for pose perturbations.
Eigen::Vector3d seeded_direction(std::uint64_t seed, int salt) {
  std::mt19937_64 rng(seed * 1315423911u + static_cast<std::uint64_t>(salt));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d v(u(rng), u(rng), u(rng));
  double n = v.norm();
  return n > 1e-12 ? Eigen::Vector3d(v / n) : Eigen::Vector3d::UnitX();
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir, std::uint64_t seed) {
  SceneConfig cfg = load_scene_config(scene_path);
  RenderedPair pair =
      make_pair(cfg.scene, cfg.intrinsics, cfg.source_cameras, cfg.width, cfg.height, seed);
  fs::create_directories(out_dir);
  fs::path dir(out_dir);

  auto write_image = [&](const RasterMap& img, const std::string& stem) {
    RasterMap bytes = img;
    bytes.data() *= 255.0;
    write_pgm((dir / (stem + ".pgm")).string(), bytes);
    write_pfm((dir / (stem + ".pfm")).string(), img);
  };
  write_image(pair.target_image, "target");
  for (size_t s = 0; s < pair.source_images.size(); ++s)
    write_image(pair.source_images[s], "source_" + std::to_string(s));
  write_pfm((dir / "gt_depth.pfm").string(), pair.gt_depth);
  write_pose_rows((dir / "poses.csv").string(), pair.gt_poses);
  write_csv((dir / "intrinsics.csv").string(),
            {{"fx", "fy", "cx", "cy"},
             {fmt(cfg.intrinsics.fx), fmt(cfg.intrinsics.fy), fmt(cfg.intrinsics.cx),
              fmt(cfg.intrinsics.cy)}});
  return 0;
}

int cmd_train_features(const std::string& data_dir, int feature_channels, int scales, long steps,
                       double alpha, double beta, double lr, std::uint64_t seed,
                       const std::string& resume_path, const std::string& out_path) {
  RenderedPair pair = load_pair(data_dir);
  std::vector<RasterMap> dataset;
  dataset.push_back(pair.target_image);
  for (const auto& s : pair.source_images) dataset.push_back(s);

  TrainConfig cfg;
  cfg.steps = steps;
  cfg.learning_rate = lr;
  cfg.rng_seed = seed;
  cfg.loss.alpha = alpha;
  cfg.loss.beta = beta;

  AutoencoderParams params;
  AdamState adam;
  long start_step = 0;
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    params = ckpt.params;
    adam = ckpt.adam;
    start_step = ckpt.trained_steps;
  } else {
    ArchSpec arch;
    arch.in_channels = dataset[0].channels();
    arch.feature_channels = feature_channels;
    arch.scales = scales;
    params = AutoencoderParams::init(arch, seed);
    adam = AdamState::zeros(params.parameter_count());
  }

  TrainResult result = train(params, dataset, cfg, &adam, start_step);
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(out_path, {result.params, result.adam, true, result.total_steps});

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"step", "total", "rec", "dis", "cvt"});
  for (const auto& h : result.history)
    rows.push_back({std::to_string(h.step), fmt(h.total), fmt(h.rec), fmt(h.dis), fmt(h.cvt)});
  fs::path history = out.parent_path().empty() ? fs::path("loss_history.csv")
                                               : out.parent_path() / "loss_history.csv";
  write_csv(history.string(), rows);
  return 0;
}

LossConfig arm_config(const std::string& mode) {
  LossConfig cfg;
  cfg.use_photometric = mode == "photo";
  cfg.use_feature_metric = mode == "feat";
  return cfg;
}

int cmd_align(const std::string& pair_dir, const std::string& mode, const std::string& solve,
              const std::string& ckpt_path, const std::string& out_dir, int levels,
              int max_iters, const std::string& optimizer, double perturb_rot_deg,
              double perturb_trans_frac, double depth_init_scale, std::uint64_t seed) {
  RenderedPair pair = load_pair(pair_dir);
  std::optional<AutoencoderParams> net;
  if (mode == "feat") net = load_checkpoint(ckpt_path).params;

  AlignOptions opts;
  opts.pyramid_levels = levels;
  opts.max_iters = max_iters;
  opts.optimizer =
      optimizer == "gd" ? PoseOptimizer::GradientDescent : PoseOptimizer::GaussNewton;

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  AlignProblem problem =
      AlignProblem::build(pair, arm_config(mode), net ? &*net : nullptr, levels);

  Pose solved_pose = pair.gt_poses[0];
  if (solve == "pose" || solve == "both") {
    Pose delta;
    delta.axis_angle =
        perturb_rot_deg * M_PI / 180.0 * seeded_direction(seed, 1);
    delta.translation =
        perturb_trans_frac * problem.median_depth() * seeded_direction(seed, 2);
    Pose init = pose_compose(delta, pair.gt_poses[0]);
    PoseResult res = optimize_pose(problem, init, opts);
    solved_pose = res.pose;
    write_pose_rows((dir / "pose.csv").string(), {res.pose});
    write_trace((dir / "trace_pose.csv").string(), res.trace);
  }
  if (solve == "depth" || solve == "both") {
    RenderedPair depth_pair = pair;
    if (solve == "both") depth_pair.gt_poses[0] = solved_pose;
    AlignProblem depth_problem =
        AlignProblem::build(depth_pair, arm_config(mode), net ? &*net : nullptr, 1);
    RasterMap init = pair.gt_depth;
    init.data() *= depth_init_scale;
    DepthResult res = optimize_depth(depth_problem, init, opts);
    write_pfm((dir / "depth.pfm").string(), res.depth);
    write_trace((dir / "trace_depth.csv").string(), res.trace);
  }
  return 0;
}

int cmd_landscape(const std::string& pair_dir, const std::string& pixel_arg,
                  const std::string& range_arg, const std::string& ckpt_path,
                  const std::string& out_csv) {
  RenderedPair pair = load_pair(pair_dir);
  std::optional<AutoencoderParams> net;
  if (!ckpt_path.empty()) net = load_checkpoint(ckpt_path).params;

  int px = 0, py = 0;
  if (std::sscanf(pixel_arg.c_str(), "%d,%d", &px, &py) != 2)
    throw CLI::ValidationError("--pixel must be u,v");
  RangeSpec range = parse_range(range_arg, "--range");

  LossConfig cfg;
  cfg.use_photometric = true;
  cfg.use_feature_metric = net.has_value();
  AlignProblem problem = AlignProblem::build(pair, cfg, net ? &*net : nullptr, 1);
  auto rows = landscape_probe(problem, px, py, range.lo, range.hi, range.n);

  std::vector<std::vector<std::string>> out;
  out.push_back({"depth", "loss_ph", "loss_fm"});
  for (const auto& r : rows) out.push_back({fmt(r.depth), fmt(r.loss_ph), fmt(r.loss_fm)});
  write_csv(out_csv, out);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& kind,
             bool no_median_scale, double cap, const std::string& segments_arg,
             bool global_scale) {
  if (kind == "depth") {
    RasterMap pred = read_pfm(pred_path);
    RasterMap gt = read_pfm(gt_path);
    Mask mask = Mask::all_valid(gt.width(), gt.height());
    double scale = 1.0;
    if (!no_median_scale) std::tie(pred, scale) = median_scale(pred, gt, mask);
    DepthMetrics m = depth_metrics(pred, gt, mask, cap);
    std::cout << "Abs Rel,Sq Rel,RMSE,RMSE log,d1,d2,d3\n"
              << fmt(m.abs_rel) << ',' << fmt(m.sq_rel) << ',' << fmt(m.rmse) << ','
              << fmt(m.rmse_log) << ',' << fmt(m.delta1) << ',' << fmt(m.delta2) << ','
              << fmt(m.delta3) << "\n";
    return 0;
  }
  // odometry: trajectories of camera-to-world poses, one per line
  std::vector<Pose> pred = read_pose_rows(pred_path);
  std::vector<Pose> gt = read_pose_rows(gt_path);
  if (global_scale) pred = global_scale_align(pred, gt).first;
  std::vector<double> segments;
  {
    std::stringstream ss(segments_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) segments.push_back(std::stod(tok));
  }
  OdometryMetrics m = odometry_metrics(pred, gt, segments);
  std::cout << "t_err,r_err,protocol\n"
            << fmt(m.t_err) << ',' << fmt(m.r_err) << ",simplified-kitti\n";
  return 0;
}

int cmd_basin(const std::string& pair_dir, const std::string& ckpt_path,
              const std::string& region_arg, const std::string& sweep_arg,
              const std::string& out_csv, int max_iters) {
  RenderedPair pair = load_pair(pair_dir);
  AutoencoderParams net = load_checkpoint(ckpt_path).params;

  int rx = 0, ry = 0, rw = 0, rh = 0;
  if (std::sscanf(region_arg.c_str(), "%d:%d:%d:%d", &rx, &ry, &rw, &rh) != 4 || rw <= 0 ||
      rh <= 0)
    throw CLI::ValidationError("--region must be x:y:w:h");
  RangeSpec sweep = parse_range(sweep_arg, "--sweep");

  LossConfig photo;
  photo.use_photometric = true;
  photo.use_feature_metric = false;
  LossConfig feat;
  feat.use_photometric = false;
  feat.use_feature_metric = true;
  AlignProblem photo_problem = AlignProblem::build(pair, photo, nullptr, 1);
  AlignProblem feat_problem = AlignProblem::build(pair, feat, &net, 1);

  AlignOptions opts;
  opts.max_iters = max_iters;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"u", "v", "width_photo", "width_feat"});
  for (int y = ry; y < ry + rh; ++y)
    for (int x = rx; x < rx + rw; ++x) {
      BasinReport bp = basin_measure_depth(photo_problem, x, y, sweep.lo, sweep.hi, sweep.n,
                                           kDepthTolRel, opts);
      BasinReport bf = basin_measure_depth(feat_problem, x, y, sweep.lo, sweep.hi, sweep.n,
                                           kDepthTolRel, opts);
      rows.push_back({std::to_string(x), std::to_string(y), fmt(bp.width), fmt(bf.width)});
    }
  write_csv(out_csv, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-metric vs photometric direct alignment experiments"};
  app.require_subcommand(1);

  std::string scene_path, out_dir, data_dir, resume_path, out_path;
  std::string pair_dir, mode, solve = "pose", ckpt_path, pixel_arg, range_arg, out_csv;
  std::string pred_path, gt_path, kind, segments_arg = "2,4,8", region_arg;
  std::string sweep_arg = "0.5:1.5:11", optimizer = "gn";
  std::uint64_t seed = 0;
  int feature_channels = 16, scales = 2, levels = 3, max_iters = 60;
  long steps = 100;
  double alpha = 1e-3, beta = 1e-3, lr = 1e-4, cap = 80.0;
  double perturb_rot = 0.0, perturb_trans = 0.0, depth_init_scale = 1.0;
  bool no_median_scale = false, global_scale = false;

  CLI::App* synth = app.add_subcommand("synth", "render a scene into a pair directory");
  synth->add_option("scene", scene_path, "scene config file")->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", seed, "noise-texture seed");

  CLI::App* trainf = app.add_subcommand("train-features", "train the toy feature autoencoder");
  trainf->add_option("--data", data_dir, "pair directory used as the dataset")->required();
  trainf->add_option("--arch", feature_channels, "feature channels F");
  trainf->add_option("--scales", scales, "decoder scales");
  trainf->add_option("--steps", steps, "training steps");
  trainf->add_option("--alpha", alpha, "discriminative-loss weight");
  trainf->add_option("--beta", beta, "convergent-loss weight");
  trainf->add_option("--lr", lr, "learning rate");
  trainf->add_option("--seed", seed, "init seed");
  trainf->add_option("--resume", resume_path, "checkpoint to continue from");
  trainf->add_option("--out", out_path, "output checkpoint path")->required();

  CLI::App* align = app.add_subcommand("align", "optimize pose and/or depth on a pair");
  align->add_option("--pair", pair_dir, "pair directory")->required();
  align->add_option("--mode", mode, "loss arm")
      ->required()
      ->check(CLI::IsMember({"photo", "feat"}));
  align->add_option("--solve", solve, "what to optimize")
      ->check(CLI::IsMember({"pose", "depth", "both"}));
  align->add_option("--ckpt", ckpt_path, "feature checkpoint (required for feat mode)");
  align->add_option("--out", out_dir, "output directory")->required();
  align->add_option("--levels", levels, "pyramid levels");
  align->add_option("--max-iters", max_iters, "iterations per level");
  align->add_option("--optimizer", optimizer, "pose optimizer")
      ->check(CLI::IsMember({"gn", "gd"}));
  align->add_option("--perturb-rot", perturb_rot, "initial rotation offset, degrees");
  align->add_option("--perturb-trans", perturb_trans, "initial translation offset, fraction of median depth");
  align->add_option("--depth-init-scale", depth_init_scale, "depth init = scale * gt");
  align->add_option("--seed", seed, "perturbation direction seed");

  CLI::App* landscape = app.add_subcommand("landscape", "sweep one pixel's depth");
  landscape->add_option("--pair", pair_dir, "pair directory")->required();
  landscape->add_option("--pixel", pixel_arg, "probe pixel u,v")->required();
  landscape->add_option("--range", range_arg, "depth sweep lo:hi:n")->required();
  landscape->add_option("--ckpt", ckpt_path, "feature checkpoint");
  landscape->add_option("--out", out_csv, "output CSV")->required();

  CLI::App* eval = app.add_subcommand("eval", "depth or odometry metrics to stdout");
  eval->add_option("--pred", pred_path, "prediction (PFM or trajectory CSV)")->required();
  eval->add_option("--gt", gt_path, "ground truth (PFM or trajectory CSV)")->required();
  eval->add_option("--kind", kind, "metric family")
      ->required()
      ->check(CLI::IsMember({"depth", "odom"}));
  eval->add_flag("--no-median-scale", no_median_scale, "skip median scaling (depth)");
  eval->add_option("--cap", cap, "depth cap (depth)");
  eval->add_option("--segments", segments_arg, "segment lengths (odom)");
  eval->add_flag("--global-scale", global_scale, "apply global scale alignment (odom)");

  CLI::App* basin = app.add_subcommand("basin", "per-pixel convergence basins, both arms");
  basin->add_option("--pair", pair_dir, "pair directory")->required();
  basin->add_option("--ckpt", ckpt_path, "feature checkpoint")->required();
  basin->add_option("--region", region_arg, "probe rectangle x:y:w:h")->required();
  basin->add_option("--sweep", sweep_arg, "init factors lo:hi:n");
  basin->add_option("--out", out_csv, "output CSV")->required();
  basin->add_option("--max-iters", max_iters, "per-init iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(scene_path, out_dir, seed);
    if (trainf->parsed())
      return cmd_train_features(data_dir, feature_channels, scales, steps, alpha, beta, lr,
                                seed, resume_path, out_path);
    if (align->parsed()) {
      if (mode == "feat" && ckpt_path.empty()) {
        std::cerr << "align: --mode feat requires --ckpt\n";
        return 2;
      }
      return cmd_align(pair_dir, mode, solve, ckpt_path, out_dir, levels, max_iters, optimizer,
                       perturb_rot, perturb_trans, depth_init_scale, seed);
    }
    if (landscape->parsed())
      return cmd_landscape(pair_dir, pixel_arg, range_arg, ckpt_path, out_csv);
    if (eval->parsed())
      return cmd_eval(pred_path, gt_path, kind, no_median_scale, cap, segments_arg,
                      global_scale);
    if (basin->parsed())
      return cmd_basin(pair_dir, ckpt_path, region_arg, sweep_arg, out_csv, max_iters);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
