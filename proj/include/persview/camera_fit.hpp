#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "persview/camera.hpp"
#include "persview/image.hpp"

namespace persview {

inline constexpr std::size_t kLandmarkCount = 478;

// Keypoints with zero centroid and unit RMS radius. Only normalize_landmarks
// and from_normalized construct one.
class LandmarkSet {
 public:
  LandmarkSet() = default;

  // Accepts already normalised points; throws when the convention is violated.
  static LandmarkSet from_normalized(std::vector<Eigen::Vector3d> points);

  const std::vector<Eigen::Vector3d>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  friend LandmarkSet normalize_landmarks(std::span<const Eigen::Vector3d> raw);
  explicit LandmarkSet(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {}

  std::vector<Eigen::Vector3d> points_;
};

LandmarkSet normalize_landmarks(std::span<const Eigen::Vector3d> raw);

double landmark_loss(const LandmarkSet& m, const LandmarkSet& m_hat);

using PhotometricDistance = std::function<double(const ImageBuffer&, const ImageBuffer&)>;

double mse_distance(const ImageBuffer& a, const ImageBuffer& b);
double one_minus_ssim_distance(const ImageBuffer& a, const ImageBuffer& b);

struct FitConfig {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double learning_rate = 0.001;
  int max_iters = 200;
  int alternation_period = 1;
  double convergence_tol = 1e-6;
};

void validate(const FitConfig& cfg);

double combined_loss(const ImageBuffer& target, const ImageBuffer& rendered, const LandmarkSet& m,
                     const LandmarkSet& m_hat, const FitConfig& cfg,
                     const PhotometricDistance& photometric);

// Raw 3D keypoints of `geometry` seen through `cam`: projected pixel
// coordinates plus depth scaled to pixel units (f * z_cam / t_z).
std::vector<Eigen::Vector3d> observe_keypoints(std::span<const Eigen::Vector3d> geometry,
                                               const CameraParams& cam);

// Camera whose focal is slaved to t_z through the reparametrisation.
CameraParams with_reparam_focal(CameraParams cam, const ReparamContext& ctx);

struct LandmarkGradient {
  double loss = 0.0;
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();     // d/d omega, R <- exp(omega) R
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // includes focal(t_z)
};

// Landmark loss of the camera against `observed` and its analytic gradient.
LandmarkGradient landmark_loss_gradient(std::span<const Eigen::Vector3d> geometry,
                                        const LandmarkSet& observed, const CameraParams& cam,
                                        const ReparamContext& ctx);

// Optional extra objective on the camera (an external photometric oracle);
// differentiated numerically.
using CameraObjective = std::function<double(const CameraParams&)>;

struct FitResult {
  CameraParams camera;
  std::vector<double> loss_trace;
  std::vector<double> tz_trace;
  std::vector<double> focal_trace;
  int iterations_run = 0;
  bool converged = false;
};

FitResult fit_camera(std::span<const Eigen::Vector3d> reference_geometry,
                     const LandmarkSet& observed, const CameraParams& init,
                     const ReparamContext& ctx, const FitConfig& cfg,
                     const CameraObjective& photometric = {});

}  // namespace persview
