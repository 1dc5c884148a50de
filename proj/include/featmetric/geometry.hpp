#pragma once

#include <Eigen/Dense>

#include "featmetric/errors.hpp"

namespace featmetric {

using Point3 = Eigen::Vector3d;
using PoseJacobian = Eigen::Matrix<double, 2, 6>;

/// Transformed points with Z below this are flagged invalid by warp().
inline constexpr double kMinWarpDepth = 1e-6;

/// Pinhole camera parameters, all in pixels.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Rigid transform as axis-angle rotation plus translation. The canonical
/// chart keeps |axis_angle| < pi; pose_compose / pose_inverse re-wrap into it.
struct Pose {
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }
};

/// Rotation matrix + translation form of a Pose; cheaper to apply in loops.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
};

struct WarpResult {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  bool valid = false;
};

/// Rodrigues' formula; series expansion below |theta| = 1e-8.
RigidTransform pose_exp(const Pose& pose);

/// Axis-angle extraction with |theta| <= pi. Deterministic axis choice at the
/// theta = pi boundary.
Pose pose_log(const RigidTransform& transform);

Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);

/// Rotation angle of the pose, in radians.
double pose_rotation_angle(const Pose& a);

Eigen::Vector2d project(const Intrinsics& K, const Point3& p);
Point3 backproject(const Intrinsics& K, double u, double v, double depth);

WarpResult warp(const Intrinsics& K, double u, double v, double depth, const RigidTransform& g);
WarpResult warp(const Intrinsics& K, double u, double v, double depth, const Pose& g);

/// d(warped pixel)/d(depth), closed form through backprojection, the rigid
/// transform and projection.
Eigen::Vector2d warp_jacobian_depth(const Intrinsics& K, double u, double v, double depth,
                                    const RigidTransform& g);
Eigen::Vector2d warp_jacobian_depth(const Intrinsics& K, double u, double v, double depth,
                                    const Pose& g);

/// d(warped pixel)/d(twist) for a left-multiplied infinitesimal perturbation
/// compose(Pose{eps_rot, eps_trans}, g). Columns 0-2 rotation, 3-5 translation.
PoseJacobian warp_jacobian_pose(const Intrinsics& K, double u, double v, double depth,
                                const RigidTransform& g);
PoseJacobian warp_jacobian_pose(const Intrinsics& K, double u, double v, double depth,
                                const Pose& g);

Intrinsics intrinsics_scale(const Intrinsics& K, double factor);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

}  // namespace featmetric
