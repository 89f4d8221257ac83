#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "persview/camera.hpp"
#include "persview/session_io.hpp"

namespace persview {

enum class FixtureKind { Plane, Ridge, SphereCap };

FixtureKind parse_fixture_kind(std::string_view name);
std::string_view to_string(FixtureKind kind);

// Analytic scene behind a synthetic bundle: a surface with a procedural
// texture, seen by a pinhole camera of focal = size at distance 2.
class FixtureScene {
 public:
  static constexpr int kMinSize = 16;
  static constexpr double kCameraDistance = 2.0;

  FixtureScene(FixtureKind kind, int size);

  FixtureKind kind() const { return kind_; }
  int size() const { return size_; }
  const CameraParams& camera() const { return camera_; }

  // Nearest intersection of the ray origin + t*dir (t > 0) with the surface.
  std::optional<Eigen::Vector3d> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  // Surface point seen through the centre of `pixel` of `cam`.
  std::optional<Eigen::Vector3d> surface_at_pixel(const CameraParams& cam, const Eigen::Vector2d& pixel) const;

  std::array<float, 3> texture(const Eigen::Vector3d& world) const;
  static constexpr std::array<float, 3> kBackground = {0.1f, 0.1f, 0.12f};

  ImageBuffer render(const CameraParams& cam) const;
  DepthMap depth(const CameraParams& cam) const;

  // Mean of the back-projected valid depth pixels of the base camera.
  Eigen::Vector3d centroid() const { return centroid_; }

  // Sphere parameters (SphereCap only).
  Eigen::Vector3d sphere_center() const { return {0.0, 0.0, 0.3}; }
  double sphere_radius() const { return 0.8; }

 private:
  FixtureKind kind_;
  int size_;
  CameraParams camera_;
  Eigen::Vector3d centroid_ = Eigen::Vector3d::Zero();
};

// Camera that orbits `cam` about `pivot` (world) by yaw/pitch/roll degrees in
// the camera frame. Focal and t_z are untouched.
CameraParams orbit_camera(const CameraParams& cam, const Eigen::Vector3d& pivot, double yaw_deg,
                          double pitch_deg, double roll_deg);

struct FixtureOptions {
  double reference_yaw_deg = 5.0;
};

SessionBundle make_fixture(FixtureKind kind, int size, const FixtureOptions& options = {});

}  // namespace persview
