#include "featmetric/synth.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "featmetric/parallel.hpp"

namespace featmetric {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) ^
                                                 splitmix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); }

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

double Texture::eval(double s1, double s2) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::Checker: {
      std::int64_t p = static_cast<std::int64_t>(std::floor(s1 / cell)) +
                       static_cast<std::int64_t>(std::floor(s2 / cell));
      return ((p % 2 + 2) % 2) == 0 ? lo : hi;
    }
    case Kind::Sinusoid:
      return clamp01(base + amplitude * std::sin(2.0 * M_PI * freq_u * s1 + phase_u) *
                                std::sin(2.0 * M_PI * freq_v * s2 + phase_v));
    case Kind::Triangle: {
      double t = freq_u * s1 + freq_v * s2 + phase_u;
      double tri = 2.0 * std::abs(t - std::floor(t) - 0.5);  // in [0,1]
      return clamp01(base + amplitude * (tri - 0.5));
    }
    case Kind::SoftShadow:
      return clamp01(base + slope_u * s1 + slope_v * s2);
    case Kind::ValueNoise: {
      double xs = s1 / cell, ys = s2 / cell;
      std::int64_t xi = static_cast<std::int64_t>(std::floor(xs));
      std::int64_t yi = static_cast<std::int64_t>(std::floor(ys));
      double fx = quintic(xs - static_cast<double>(xi));
      double fy = quintic(ys - static_cast<double>(yi));
      double v00 = hash01(seed, xi, yi), v10 = hash01(seed, xi + 1, yi);
      double v01 = hash01(seed, xi, yi + 1), v11 = hash01(seed, xi + 1, yi + 1);
      double blend = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
      return clamp01(base + amplitude * (blend - 0.5));
    }
  }
  return 0.0;
}

Texture constant_texture(double value) {
  Texture t;
  t.kind = Texture::Kind::Constant;
  t.value = value;
  return t;
}

Texture checker_texture(double cell, double lo, double hi) {
  Texture t;
  t.kind = Texture::Kind::Checker;
  t.cell = cell;
  t.lo = lo;
  t.hi = hi;
  return t;
}

Texture sinusoid_texture(double freq_u, double freq_v, double amplitude, double base,
                         double phase_u, double phase_v) {
  Texture t;
  t.kind = Texture::Kind::Sinusoid;
  t.freq_u = freq_u;
  t.freq_v = freq_v;
  t.amplitude = amplitude;
  t.base = base;
  t.phase_u = phase_u;
  t.phase_v = phase_v;
  return t;
}

Texture triangle_texture(double freq_u, double freq_v, double amplitude, double base,
                         double phase) {
  Texture t;
  t.kind = Texture::Kind::Triangle;
  t.freq_u = freq_u;
  t.freq_v = freq_v;
  t.amplitude = amplitude;
  t.base = base;
  t.phase_u = phase;
  return t;
}

Texture soft_shadow_texture(double base, double slope_u, double slope_v) {
  Texture t;
  t.kind = Texture::Kind::SoftShadow;
  t.base = base;
  t.slope_u = slope_u;
  t.slope_v = slope_v;
  return t;
}

Texture value_noise_texture(double cell, double amplitude, double base, std::uint64_t seed) {
  Texture t;
  t.kind = Texture::Kind::ValueNoise;
  t.cell = cell;
  t.amplitude = amplitude;
  t.base = base;
  t.seed = seed;
  return t;
}

std::map<std::string, Texture> texture_bank() {
  std::map<std::string, Texture> bank;
  bank["flat_wall"] = constant_texture(0.5);
  bank["soft_shadow"] = soft_shadow_texture(0.5, 0.001, 0.0);
  bank["checker"] = checker_texture(8.0);
  bank["sinusoid"] = sinusoid_texture(0.2, 0.2, 0.3, 0.5, 0.0, M_PI / 2);
  bank["triangle"] = triangle_texture(0.45, 0.12);
  bank["noise"] = value_noise_texture(1.0, 0.4);
  return bank;
}

ScenePlane ScenePlane::make(const Eigen::Vector3d& normal, double offset, Texture texture) {
  ScenePlane p;
  double n = normal.norm();
  if (!(n > 0)) throw InvalidConfig("ScenePlane: zero normal");
  p.normal = normal / n;
  p.offset = offset / n;
  // Deterministic in-plane basis: cross with +Z, falling back to +Y.
  Eigen::Vector3d ref = Eigen::Vector3d::UnitZ();
  if (p.normal.cross(ref).norm() < 1e-9) ref = Eigen::Vector3d::UnitY();
  p.basis_u = p.normal.cross(ref).normalized();
  p.basis_v = p.normal.cross(p.basis_u);
  p.texture = texture;
  return p;
}

RenderView render_view(const Scene& scene, const Intrinsics& K, const Pose& camera_to_world,
                       int width, int height) {
  if (scene.planes.empty()) throw InvalidConfig("render_view: scene has no planes");
  RenderView out{RasterMap(width, height, 1), RasterMap(width, height, 1)};
  RigidTransform cam = pose_exp(camera_to_world);
  bool missed = false;

  parallel_rows(height, [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y)
      for (int x = 0; x < width; ++x) {
        // Camera-frame ray with unit Z, so the hit parameter equals depth.
        Eigen::Vector3d dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
        Eigen::Vector3d dir = cam.rotation * dir_cam;
        double best_t = std::numeric_limits<double>::infinity();
        const ScenePlane* best = nullptr;
        for (const auto& plane : scene.planes) {
          double denom = plane.normal.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          double t = (plane.offset - plane.normal.dot(cam.translation)) / denom;
          if (t > 1e-9 && t < best_t) {
            best_t = t;
            best = &plane;
          }
        }
        if (!best) {
          missed = true;
          continue;
        }
        Eigen::Vector3d hit = cam.translation + best_t * dir;
        out.depth.at(x, y) = best_t;
        out.image.at(x, y) = best->texture.eval(best->basis_u.dot(hit), best->basis_v.dot(hit));
      }
  });
  if (missed) throw RayMiss("render_view: a ray hit no scene plane");
  return out;
}

RenderedPair make_pair(const Scene& scene, const Intrinsics& K,
                       const std::vector<Pose>& source_cameras_to_world, int width, int height,
                       std::uint64_t seed) {
  if (source_cameras_to_world.empty())
    throw InvalidConfig("make_pair: at least one source camera required");
  Scene seeded = scene;
  if (seed != 0) {
    for (size_t i = 0; i < seeded.planes.size(); ++i)
      if (seeded.planes[i].texture.kind == Texture::Kind::ValueNoise)
        seeded.planes[i].texture.seed = splitmix64(seed ^ (i + 1));
  }

  RenderedPair pair;
  pair.intrinsics = K;
  RenderView target = render_view(seeded, K, Pose::identity(), width, height);
  pair.target_image = std::move(target.image);
  pair.gt_depth = std::move(target.depth);
  for (const auto& cam : source_cameras_to_world) {
    RenderView src = render_view(seeded, K, cam, width, height);
    pair.source_images.push_back(std::move(src.image));
    pair.gt_poses.push_back(pose_inverse(cam));
  }
  return pair;
}

namespace {

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '[' || c == ']') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const char* key) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("scene config: bad number for ") + key + ": " + s);
  }
}

Eigen::Vector3d parse_vec3(const std::vector<std::string>& tokens, const char* key) {
  if (tokens.size() != 3)
    throw ParseError(std::string("scene config: ") + key + " expects 3 values");
  return {parse_num(tokens[0], key), parse_num(tokens[1], key), parse_num(tokens[2], key)};
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct PendingPlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 1.0;
  Texture texture = constant_texture(0.5);
};

void apply_texture_param(Texture& tex, const std::string& key, const std::string& value) {
  if (key == "value") tex.value = parse_num(value, key.c_str());
  else if (key == "lo") tex.lo = parse_num(value, key.c_str());
  else if (key == "hi") tex.hi = parse_num(value, key.c_str());
  else if (key == "cell") tex.cell = parse_num(value, key.c_str());
  else if (key == "base") tex.base = parse_num(value, key.c_str());
  else if (key == "amplitude") tex.amplitude = parse_num(value, key.c_str());
  else if (key == "freq_u") tex.freq_u = parse_num(value, key.c_str());
  else if (key == "freq_v") tex.freq_v = parse_num(value, key.c_str());
  else if (key == "phase_u") tex.phase_u = parse_num(value, key.c_str());
  else if (key == "phase_v") tex.phase_v = parse_num(value, key.c_str());
  else if (key == "slope_u") tex.slope_u = parse_num(value, key.c_str());
  else if (key == "slope_v") tex.slope_v = parse_num(value, key.c_str());
  else if (key == "seed") tex.seed = static_cast<std::uint64_t>(parse_num(value, key.c_str()));
  else throw ParseError("scene config: unknown plane key: " + key);
}

}  // namespace

SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig cfg;
  cfg.intrinsics = Intrinsics{80.0, 80.0, 47.5, 31.5};
  int sources = 1;
  Eigen::Vector3d baseline(0.1, 0.0, 0.0);
  Eigen::Vector3d rotation(0.0, 0.0, 0.0);
  std::vector<PendingPlane> planes;

  enum class Section { None, Camera, Pair, Plane } section = Section::None;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("scene config: malformed section: " + raw);
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name == "camera") section = Section::Camera;
      else if (name == "pair") section = Section::Pair;
      else if (name == "plane") {
        section = Section::Plane;
        planes.emplace_back();
      } else {
        throw ParseError("scene config: unknown section: " + name);
      }
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("scene config: expected key = value: " + raw);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::vector<std::string> tokens = split_tokens(value);
    if (tokens.empty()) throw ParseError("scene config: empty value for " + key);

    switch (section) {
      case Section::Camera:
        if (key == "width") cfg.width = static_cast<int>(parse_num(tokens[0], "width"));
        else if (key == "height") cfg.height = static_cast<int>(parse_num(tokens[0], "height"));
        else if (key == "fx") cfg.intrinsics.fx = parse_num(tokens[0], "fx");
        else if (key == "fy") cfg.intrinsics.fy = parse_num(tokens[0], "fy");
        else if (key == "cx") cfg.intrinsics.cx = parse_num(tokens[0], "cx");
        else if (key == "cy") cfg.intrinsics.cy = parse_num(tokens[0], "cy");
        else throw ParseError("scene config: unknown camera key: " + key);
        break;
      case Section::Pair:
        if (key == "sources") sources = static_cast<int>(parse_num(tokens[0], "sources"));
        else if (key == "baseline") baseline = parse_vec3(tokens, "baseline");
        else if (key == "rotation") rotation = parse_vec3(tokens, "rotation");
        else throw ParseError("scene config: unknown pair key: " + key);
        break;
      case Section::Plane: {
        PendingPlane& plane = planes.back();
        if (key == "normal") plane.normal = parse_vec3(tokens, "normal");
        else if (key == "offset") plane.offset = parse_num(tokens[0], "offset");
        else if (key == "texture") {
          auto bank = texture_bank();
          auto it = bank.find(tokens[0]);
          if (it == bank.end()) throw ParseError("scene config: unknown texture: " + tokens[0]);
          plane.texture = it->second;
        } else {
          apply_texture_param(plane.texture, key, tokens[0]);
        }
        break;
      }
      case Section::None:
        throw ParseError("scene config: key outside any section: " + key);
    }
  }
  if (planes.empty()) throw ParseError("scene config: no [plane] sections");
  if (sources != 1 && sources != 2) throw ParseError("scene config: sources must be 1 or 2");

  for (const auto& p : planes)
    cfg.scene.planes.push_back(ScenePlane::make(p.normal, p.offset, p.texture));
  Pose cam0;
  cam0.axis_angle = rotation;
  cam0.translation = baseline;
  cfg.source_cameras.push_back(cam0);
  if (sources == 2) {
    Pose cam1;
    cam1.axis_angle = -rotation;
    cam1.translation = -baseline;
    cfg.source_cameras.push_back(cam1);
  }
  return cfg;
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_scene_config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene_config(buf.str());
}

SceneConfig corridor_config(bool flat_wall) {
  SceneConfig cfg;
  cfg.width = 96;
  cfg.height = 64;
  cfg.intrinsics = Intrinsics{80.0, 80.0, 47.5, 31.5};
  // Triangle-wave floor: constant-magnitude texture gradient away from the
  // ridge lines, and linear in image x along each row, so warped bilinear
  // samples under the x-only baseline are essentially exact. The x-only
  // baseline also keeps warped footprints off the floor/wall corner row.
  cfg.scene.planes.push_back(ScenePlane::make(
      Eigen::Vector3d(0, 1, 0), 1.0, triangle_texture(0.2, 0.12, 0.45, 0.5, 0.15)));
  cfg.scene.planes.push_back(ScenePlane::make(
      Eigen::Vector3d(0, 0, 1), 8.0,
      flat_wall ? constant_texture(0.5) : soft_shadow_texture(0.5, 0.001, 0.0)));
  Pose cam0;
  cam0.axis_angle = Eigen::Vector3d(0.0, 0.004, 0.0);
  cam0.translation = Eigen::Vector3d(0.25, 0.0, 0.0);
  Pose cam1;
  cam1.axis_angle = -cam0.axis_angle;
  cam1.translation = -cam0.translation;
  cfg.source_cameras = {cam0, cam1};
  return cfg;
}

CorridorRegions corridor_regions() {
  // The floor (y=1 plane) is nearer than the wall (Z=8) for rows with
  // (v-cy)/fy > 1/8, i.e. v > 41.5 at the default intrinsics.
  return CorridorRegions{4, 36, 46, 60};
}

}  // namespace featmetric
