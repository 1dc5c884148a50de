#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "featmetric/geometry.hpp"
#include "featmetric/raster.hpp"

namespace featmetric {

/// Procedural texture evaluated analytically at plane-surface coordinates.
/// All kinds produce intensities in [0,1].
struct Texture {
  enum class Kind { Constant, Checker, Sinusoid, Triangle, SoftShadow, ValueNoise };

  Kind kind = Kind::Constant;
  double value = 0.5;       // constant
  double lo = 0.1;          // checker
  double hi = 0.9;
  double cell = 1.0;
  double base = 0.5;        // sinusoid / soft_shadow / value_noise
  double amplitude = 0.3;
  double freq_u = 0.2;      // sinusoid, cycles per scene unit
  double freq_v = 0.2;
  double phase_u = 0.0;
  double phase_v = 0.0;
  double slope_u = 0.0;     // soft_shadow, intensity per scene unit
  double slope_v = 0.0;
  std::uint64_t seed = 1;   // value_noise

  double eval(double s1, double s2) const;
};

Texture constant_texture(double value);
Texture checker_texture(double cell, double lo = 0.1, double hi = 0.9);
Texture sinusoid_texture(double freq_u, double freq_v, double amplitude = 0.3,
                         double base = 0.5, double phase_u = 0.0, double phase_v = 0.0);
/// Triangle wave of (freq_u*s1 + freq_v*s2 + phase_u): piecewise-linear with
/// constant gradient magnitude 2*amplitude*freq away from the ridge lines.
Texture triangle_texture(double freq_u, double freq_v, double amplitude = 0.45,
                         double base = 0.5, double phase = 0.0);
Texture soft_shadow_texture(double base, double slope_u, double slope_v = 0.0);
Texture value_noise_texture(double cell, double amplitude, double base = 0.5,
                            std::uint64_t seed = 1);

/// Named presets: flat_wall, soft_shadow, checker, sinusoid, triangle, noise.
std::map<std::string, Texture> texture_bank();

/// Plane n . P = offset in world coordinates, with a deterministic in-plane
/// texture basis derived from the normal.
struct ScenePlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 1.0;
  Eigen::Vector3d basis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d basis_v = Eigen::Vector3d::UnitY();
  Texture texture;

  static ScenePlane make(const Eigen::Vector3d& normal, double offset, Texture texture);
};

struct Scene {
  std::vector<ScenePlane> planes;
};

struct RenderView {
  RasterMap image;  // 1 channel, values in [0,1]
  RasterMap depth;  // Z in the camera frame
};

/// Per-pixel analytic ray/plane intersection: the nearest front-facing hit
/// supplies depth and texture value. Throws RayMiss if any ray escapes.
RenderView render_view(const Scene& scene, const Intrinsics& K, const Pose& camera_to_world,
                       int width, int height);

/// Target view plus rendered source views with exact ground truth. gt_poses
/// transform target-frame points into each source frame.
struct RenderedPair {
  RasterMap target_image;
  std::vector<RasterMap> source_images;
  RasterMap gt_depth;
  std::vector<Pose> gt_poses;
  Intrinsics intrinsics;
};

/// Renders the target at the world origin and one source per camera pose
/// (camera-to-world). The seed reseeds value-noise textures so regenerating
/// with the same seed is bit-identical.
RenderedPair make_pair(const Scene& scene, const Intrinsics& K,
                       const std::vector<Pose>& source_cameras_to_world, int width, int height,
                       std::uint64_t seed = 0);

/// Parsed form of a scene config file.
struct SceneConfig {
  Scene scene;
  Intrinsics intrinsics;
  int width = 96;
  int height = 64;
  std::vector<Pose> source_cameras;
};

/// TOML-style flat key/value grammar: `[camera]`, `[pair]` and repeated
/// `[plane]` sections of `key = value` lines (vectors space-separated).
SceneConfig parse_scene_config(const std::string& text);
SceneConfig load_scene_config(const std::string& path);

/// The default desk scene: a 96x64 two-plane corridor with a sinusoid-textured
/// floor and a perceptually flat wall. The wall carries the soft_shadow
/// low-contrast ramp by default; flat_wall=true swaps in the exactly constant
/// preset for degenerate-case probes.
SceneConfig corridor_config(bool flat_wall = false);

/// Wall rows of the corridor image (the textureless region used by probes).
struct CorridorRegions {
  int wall_y0, wall_y1;    // inclusive rows well inside the wall
  int floor_y0, floor_y1;  // inclusive rows well inside the floor
};
CorridorRegions corridor_regions();

}  // namespace featmetric
