#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace persview {

inline constexpr double kDepthEpsilon = 1e-6;

// Pinhole camera. World to camera is x_cam = rotation * x_world + translation;
// the camera looks down +z and pixel y grows downwards.
struct CameraParams {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d(0.0, 0.0, 1.0);
  double focal = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  int width = 1;
  int height = 1;

  double tz() const { return translation.z(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const {
    return rotation.transpose() * (cam - translation);
  }
  // Camera centre in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

// Throws InvalidCamera when an invariant of CameraParams does not hold.
void validate(const CameraParams& cam);

Eigen::Vector2d project(const Eigen::Vector3d& world, const CameraParams& cam);
Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const CameraParams& cam);

// Anchor for slaving the focal length to the camera distance: d0 is the
// optical-axis depth of the eyes under the original camera.
struct ReparamContext {
  double d0 = 1.0;
  double f0 = 1.0;
  double tz0 = 1.0;
};

void validate(const ReparamContext& ctx);

// Scale factor (d0 - (tz0 - tz)) / d0 applied to f0.
double reparam_alpha(const ReparamContext& ctx, double tz);
double reparam_focal(const ReparamContext& ctx, double tz);
// d f / d tz, constant for a given context.
double reparam_focal_derivative(const ReparamContext& ctx);

double halve_distance_init(double tz0);

Eigen::Matrix3d skew(const Eigen::Vector3d& w);
// Rodrigues formula; exact orthonormal output for any finite input.
Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w);
Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& r);
// Angle in radians of the relative rotation a^T b.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Yaw about camera y, pitch about camera x, roll about camera z, in degrees,
// composed as roll * pitch * yaw.
Eigen::Matrix3d rotation_from_ypr_deg(double yaw, double pitch, double roll);

}  // namespace persview
