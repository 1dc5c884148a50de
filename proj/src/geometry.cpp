#include "featmetric/geometry.hpp"

#include <cmath>

namespace featmetric {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

RigidTransform pose_exp(const Pose& pose) {
  const Eigen::Vector3d& w = pose.axis_angle;
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  Eigen::Matrix3d wx = skew(w);
  double a, b;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  RigidTransform g;
  g.rotation = Eigen::Matrix3d::Identity() + a * wx + b * (wx * wx);
  g.translation = pose.translation;
  return g;
}

Pose pose_log(const RigidTransform& transform) {
  const Eigen::Matrix3d& r = transform.rotation;
  Pose pose;
  pose.translation = transform.translation;

  double cos_theta = std::min(1.0, std::max(-1.0, (r.trace() - 1.0) * 0.5));
  double theta = std::acos(cos_theta);
  if (theta < 1e-8) {
    // First-order: R ~ I + [w]x.
    pose.axis_angle << 0.5 * (r(2, 1) - r(1, 2)),
                       0.5 * (r(0, 2) - r(2, 0)),
                       0.5 * (r(1, 0) - r(0, 1));
    return pose;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the antisymmetric part degenerates; recover the axis from
    // R + I = 2(n n^T - I)... using the dominant diagonal column.
    Eigen::Matrix3d m = 0.5 * (r + Eigen::Matrix3d::Identity());
    int k = 0;
    if (m(1, 1) > m(k, k)) k = 1;
    if (m(2, 2) > m(k, k)) k = 2;
    Eigen::Vector3d axis = m.col(k) / std::sqrt(std::max(m(k, k), 1e-15));
    axis.normalize();
    // Deterministic sign: first nonzero component positive.
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
    // Refine the sign against the antisymmetric part when it is usable.
    Eigen::Vector3d s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (s.norm() > 1e-9 && axis.dot(s) < 0) axis = -axis;
    pose.axis_angle = theta * axis;
    return pose;
  }
  double scale = theta / (2.0 * std::sin(theta));
  pose.axis_angle << scale * (r(2, 1) - r(1, 2)),
                     scale * (r(0, 2) - r(2, 0)),
                     scale * (r(1, 0) - r(0, 1));
  return pose;
}

Pose pose_compose(const Pose& a, const Pose& b) {
  RigidTransform ga = pose_exp(a);
  RigidTransform gb = pose_exp(b);
  RigidTransform g;
  g.rotation = ga.rotation * gb.rotation;
  g.translation = ga.rotation * gb.translation + ga.translation;
  return pose_log(g);
}

Pose pose_inverse(const Pose& a) {
  return pose_log(pose_exp(a).inverse());
}

double pose_rotation_angle(const Pose& a) { return a.axis_angle.norm(); }

Eigen::Vector2d project(const Intrinsics& K, const Point3& p) {
  if (!(p.z() > 0.0)) throw NonPositiveDepth("project: Z must be positive");
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Point3 backproject(const Intrinsics& K, double u, double v, double depth) {
  if (!(depth > 0.0)) throw NonPositiveDepth("backproject: depth must be positive");
  return {depth * (u - K.cx) / K.fx, depth * (v - K.cy) / K.fy, depth};
}

WarpResult warp(const Intrinsics& K, double u, double v, double depth,
                const RigidTransform& g) {
  if (!(depth > 0.0)) throw NonPositiveDepth("warp: depth must be positive");
  Point3 q = g.apply(backproject(K, u, v, depth));
  WarpResult r;
  r.z = q.z();
  if (q.z() <= kMinWarpDepth) {
    r.valid = false;
    return r;
  }
  r.u = K.fx * q.x() / q.z() + K.cx;
  r.v = K.fy * q.y() / q.z() + K.cy;
  r.valid = true;
  return r;
}

WarpResult warp(const Intrinsics& K, double u, double v, double depth, const Pose& g) {
  return warp(K, u, v, depth, pose_exp(g));
}

namespace {

// d(pixel)/d(camera point) for projection of q, 2x3.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Intrinsics& K, const Point3& q) {
  Eigen::Matrix<double, 2, 3> j;
  const double iz = 1.0 / q.z();
  j << K.fx * iz, 0.0, -K.fx * q.x() * iz * iz,
       0.0, K.fy * iz, -K.fy * q.y() * iz * iz;
  return j;
}

}  // namespace

Eigen::Vector2d warp_jacobian_depth(const Intrinsics& K, double u, double v, double depth,
                                    const RigidTransform& g) {
  Point3 p = backproject(K, u, v, depth);
  Point3 q = g.apply(p);
  if (q.z() <= kMinWarpDepth) throw InvalidWarp("warp_jacobian_depth: warp invalid here");
  // dQ/dd = R * (P / d), the backprojected ray direction.
  Eigen::Vector3d dq = g.rotation * (p / depth);
  return projection_jacobian(K, q) * dq;
}

Eigen::Vector2d warp_jacobian_depth(const Intrinsics& K, double u, double v, double depth,
                                    const Pose& g) {
  return warp_jacobian_depth(K, u, v, depth, pose_exp(g));
}

PoseJacobian warp_jacobian_pose(const Intrinsics& K, double u, double v, double depth,
                                const RigidTransform& g) {
  Point3 q = g.apply(backproject(K, u, v, depth));
  if (q.z() <= kMinWarpDepth) throw InvalidWarp("warp_jacobian_pose: warp invalid here");
  // Left perturbation: Q(eps) = exp([w]x) Q + t, so dQ/dw = -[Q]x, dQ/dt = I.
  Eigen::Matrix<double, 3, 6> dq;
  dq.block<3, 3>(0, 0) = -skew(q);
  dq.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();
  return projection_jacobian(K, q) * dq;
}

PoseJacobian warp_jacobian_pose(const Intrinsics& K, double u, double v, double depth,
                                const Pose& g) {
  return warp_jacobian_pose(K, u, v, depth, pose_exp(g));
}

Intrinsics intrinsics_scale(const Intrinsics& K, double factor) {
  return {K.fx * factor, K.fy * factor, K.cx * factor, K.cy * factor};
}

}  // namespace featmetric
