#include "featmetric/raster.hpp"

#include <cmath>

namespace featmetric {

RasterMap::RasterMap(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 0)
    throw ShapeMismatch("RasterMap: negative dimension");
  data_ = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(width) * height * channels, fill);
}

RasterMap RasterMap::from_data(int width, int height, int channels, Eigen::VectorXd data) {
  if (data.size() != static_cast<Eigen::Index>(width) * height * channels)
    throw ShapeMismatch("RasterMap: data length does not match width*height*channels");
  if (!data.allFinite())
    throw ShapeMismatch("RasterMap: data contains non-finite values");
  RasterMap m;
  m.width_ = width;
  m.height_ = height;
  m.channels_ = channels;
  m.data_ = std::move(data);
  return m;
}

SampleResult bilinear_sample(const RasterMap& map, double u, double v) {
  if (map.empty()) throw ShapeMismatch("bilinear_sample: empty map");
  const int w = map.width();
  const int h = map.height();
  const int nc = map.channels();

  SampleResult r;
  r.value = Eigen::VectorXd::Zero(nc);
  r.d_du = Eigen::VectorXd::Zero(nc);
  r.d_dv = Eigen::VectorXd::Zero(nc);
  // Tolerate rounding noise at the very edge (identity warps can land 1 ulp
  // outside), then clamp into range.
  constexpr double kEdgeTol = 1e-9;
  if (!(u >= -kEdgeTol && u <= w - 1.0 + kEdgeTol && v >= -kEdgeTol && v <= h - 1.0 + kEdgeTol)) {
    r.valid = false;
    return r;
  }
  u = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
  v = std::min(std::max(v, 0.0), static_cast<double>(h - 1));

  int x0 = (w == 1) ? 0 : std::min(static_cast<int>(std::floor(u)), w - 2);
  int y0 = (h == 1) ? 0 : std::min(static_cast<int>(std::floor(v)), h - 2);
  int x1 = (w == 1) ? 0 : x0 + 1;
  int y1 = (h == 1) ? 0 : y0 + 1;
  double fx = u - x0;
  double fy = v - y0;

  for (int c = 0; c < nc; ++c) {
    double v00 = map.at(x0, y0, c);
    double v10 = map.at(x1, y0, c);
    double v01 = map.at(x0, y1, c);
    double v11 = map.at(x1, y1, c);
    r.value[c] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) +
                 fy * ((1.0 - fx) * v01 + fx * v11);
    r.d_du[c] = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    r.d_dv[c] = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
  }
  r.valid = true;
  return r;
}

namespace {

void require_min_dims(const RasterMap& map, int min_dim, const char* op) {
  if (map.width() < min_dim || map.height() < min_dim)
    throw DimensionTooSmall(std::string(op) + ": width and height must be >= " +
                            std::to_string(min_dim));
}

}  // namespace

GradPair grad_xy(const RasterMap& map) {
  require_min_dims(map, 3, "grad_xy");
  const int w = map.width();
  const int h = map.height();
  GradPair g{RasterMap(w, h, map.channels()), RasterMap(w, h, map.channels())};
  for (int c = 0; c < map.channels(); ++c) {
    ConstPlaneRef m = map.plane(c);
    PlaneRef gx = g.gx.plane(c);
    PlaneRef gy = g.gy.plane(c);
    gx.block(0, 1, h, w - 2) = 0.5 * (m.block(0, 2, h, w - 2) - m.block(0, 0, h, w - 2));
    gx.col(0) = m.col(1) - m.col(0);
    gx.col(w - 1) = m.col(w - 1) - m.col(w - 2);
    gy.block(1, 0, h - 2, w) = 0.5 * (m.block(2, 0, h - 2, w) - m.block(0, 0, h - 2, w));
    gy.row(0) = m.row(1) - m.row(0);
    gy.row(h - 1) = m.row(h - 1) - m.row(h - 2);
  }
  return g;
}

RasterMap grad1(const RasterMap& map) {
  GradPair g = grad_xy(map);
  RasterMap out(map.width(), map.height(), map.channels());
  out.data() = g.gx.data() + g.gy.data();
  return out;
}

RasterMap grad2(const RasterMap& map) {
  require_min_dims(map, 3, "grad2");
  const int w = map.width();
  const int h = map.height();
  RasterMap out(w, h, map.channels());
  const int iw = w - 2;
  const int ih = h - 2;
  for (int c = 0; c < map.channels(); ++c) {
    ConstPlaneRef m = map.plane(c);
    PlaneRef o = out.plane(c);
    // dxx + dyy
    o.block(1, 1, ih, iw) =
        m.block(1, 0, ih, iw) + m.block(1, 2, ih, iw) +
        m.block(0, 1, ih, iw) + m.block(2, 1, ih, iw) -
        4.0 * m.block(1, 1, ih, iw);
    // + 2*dxy, with dxy as central difference of central differences
    o.block(1, 1, ih, iw) +=
        0.5 * (m.block(2, 2, ih, iw) - m.block(2, 0, ih, iw) -
               m.block(0, 2, ih, iw) + m.block(0, 0, ih, iw));
  }
  return out;
}

RasterMap downsample2(const RasterMap& map) {
  if (map.width() < 2 || map.height() < 2)
    throw DimensionTooSmall("downsample2: width and height must be >= 2");
  const int ow = map.width() / 2;
  const int oh = map.height() / 2;
  RasterMap out(ow, oh, map.channels());
  for (int c = 0; c < map.channels(); ++c) {
    ConstPlaneRef m = map.plane(c);
    PlaneRef o = out.plane(c);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        o(y, x) = 0.25 * (m(2 * y, 2 * x) + m(2 * y, 2 * x + 1) +
                          m(2 * y + 1, 2 * x) + m(2 * y + 1, 2 * x + 1));
  }
  return out;
}

RasterMap channel_abs_sum(const RasterMap& map) {
  RasterMap out(map.width(), map.height(), 1);
  PlaneRef o = out.plane(0);
  o.setZero();
  for (int c = 0; c < map.channels(); ++c) o += map.plane(c).cwiseAbs();
  return out;
}

}  // namespace featmetric
