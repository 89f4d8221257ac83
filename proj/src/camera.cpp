#include "persview/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "persview/error.hpp"

namespace persview {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NonPositiveDistance: return "NonPositiveDistance";
    case ErrorCode::EyesBehindCamera: return "EyesBehindCamera";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::BadKernel: return "BadKernel";
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorCode::DivergedFit: return "DivergedFit";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::CorruptMember: return "CorruptMember";
    case ErrorCode::MissingGenerated: return "MissingGenerated";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

void validate(const CameraParams& cam) {
  const Eigen::Matrix3d gram = cam.rotation.transpose() * cam.rotation;
  if (!cam.rotation.allFinite() ||
      ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >= 1e-6)) {
    throw Error(ErrorCode::InvalidCamera, "rotation is not orthonormal", "camera");
  }
  if (cam.rotation.determinant() < 0.0) {
    throw Error(ErrorCode::InvalidCamera, "rotation is a reflection", "camera");
  }
  if (!(cam.focal > 0.0) || !std::isfinite(cam.focal)) {
    throw Error(ErrorCode::InvalidCamera, "focal must be positive", "camera");
  }
  if (cam.width <= 0 || cam.height <= 0) {
    throw Error(ErrorCode::InvalidCamera, "resolution must be positive", "camera");
  }
  if (!cam.translation.allFinite() || !cam.principal_point.allFinite()) {
    throw Error(ErrorCode::InvalidCamera, "non-finite translation or principal point", "camera");
  }
  if (!(cam.tz() > 0.0)) {
    throw Error(ErrorCode::InvalidCamera, "t_z must be positive", "camera");
  }
}

Eigen::Vector2d project(const Eigen::Vector3d& world, const CameraParams& cam) {
  const Eigen::Vector3d c = cam.to_camera(world);
  if (!(c.z() > kDepthEpsilon)) {
    throw Error(ErrorCode::NonPositiveDepth, "point is not in front of the camera");
  }
  return cam.principal_point + cam.focal * Eigen::Vector2d(c.x() / c.z(), c.y() / c.z());
}

Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth, const CameraParams& cam) {
  if (!(depth > kDepthEpsilon)) {
    throw Error(ErrorCode::NonPositiveDepth, "back-projection depth must be positive");
  }
  const Eigen::Vector2d n = (pixel - cam.principal_point) / cam.focal;
  return cam.to_world(Eigen::Vector3d(n.x() * depth, n.y() * depth, depth));
}

void validate(const ReparamContext& ctx) {
  if (!(ctx.d0 > 0.0) || !std::isfinite(ctx.d0)) {
    throw Error(ErrorCode::InvalidArgument, "d0 must be positive", "reparam");
  }
  if (!(ctx.f0 > 0.0) || !std::isfinite(ctx.f0)) {
    throw Error(ErrorCode::InvalidArgument, "f0 must be positive", "reparam");
  }
  if (!std::isfinite(ctx.tz0)) {
    throw Error(ErrorCode::InvalidArgument, "tz0 must be finite", "reparam");
  }
}

double reparam_alpha(const ReparamContext& ctx, double tz) {
  validate(ctx);
  const double eye_depth = ctx.d0 - (ctx.tz0 - tz);
  if (!(eye_depth > 0.0) || !std::isfinite(eye_depth)) {
    throw Error(ErrorCode::EyesBehindCamera,
                "eyes would lie behind the camera at t_z = " + std::to_string(tz));
  }
  return eye_depth / ctx.d0;
}

double reparam_focal(const ReparamContext& ctx, double tz) {
  return reparam_alpha(ctx, tz) * ctx.f0;
}

double reparam_focal_derivative(const ReparamContext& ctx) {
  validate(ctx);
  return ctx.f0 / ctx.d0;
}

double halve_distance_init(double tz0) {
  if (!(tz0 > 0.0) || !std::isfinite(tz0)) {
    throw Error(ErrorCode::NonPositiveDistance, "initial camera distance must be positive");
  }
  return tz0 / 2.0;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    // First order; re-orthonormalised below.
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity() + skew(w);
    return Eigen::Quaterniond(r).normalized().toRotationMatrix();
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(Eigen::Matrix3d(a.transpose() * b)).angle();
}

Eigen::Matrix3d rotation_from_ypr_deg(double yaw, double pitch, double roll) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(yaw * kDeg, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(pitch * kDeg, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(roll * kDeg, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return rz * rx * ry;
}

}  // namespace persview
