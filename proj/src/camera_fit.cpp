#include "persview/camera_fit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "persview/error.hpp"
#include "persview/metrics.hpp"

namespace persview {

namespace {

constexpr double kMinSpread = 1e-12;

struct Normalized {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> centered;
  double rms = 0.0;
};

Normalized normalize_points(std::span<const Eigen::Vector3d> raw) {
  if (raw.empty()) throw Error(ErrorCode::DegenerateLandmarks, "no landmarks", "landmarks");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : raw) {
    if (!p.allFinite()) throw Error(ErrorCode::DegenerateLandmarks, "non-finite landmark", "landmarks");
    centroid += p;
  }
  centroid /= static_cast<double>(raw.size());
  Normalized n;
  n.centered.reserve(raw.size());
  double sq = 0.0;
  for (const auto& p : raw) {
    n.centered.push_back(p - centroid);
    sq += n.centered.back().squaredNorm();
  }
  n.rms = std::sqrt(sq / static_cast<double>(raw.size()));
  if (!(n.rms > kMinSpread)) {
    throw Error(ErrorCode::DegenerateLandmarks, "landmarks have zero spread", "landmarks");
  }
  n.points.reserve(raw.size());
  for (const auto& d : n.centered) n.points.push_back(d / n.rms);
  return n;
}

}  // namespace

LandmarkSet LandmarkSet::from_normalized(std::vector<Eigen::Vector3d> points) {
  if (points.size() != kLandmarkCount) {
    throw Error(ErrorCode::DegenerateLandmarks,
                "expected " + std::to_string(kLandmarkCount) + " landmarks, got " +
                    std::to_string(points.size()),
                "landmarks");
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  double sq = 0.0;
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::DegenerateLandmarks, "non-finite landmark", "landmarks");
    centroid += p;
    sq += p.squaredNorm();
  }
  const double count = static_cast<double>(points.size());
  if (centroid.norm() / count > 1e-6 || std::abs(std::sqrt(sq / count) - 1.0) > 1e-6) {
    throw Error(ErrorCode::DegenerateLandmarks, "landmarks are not normalised", "landmarks");
  }
  return LandmarkSet(std::move(points));
}

LandmarkSet normalize_landmarks(std::span<const Eigen::Vector3d> raw) {
  if (raw.size() != kLandmarkCount) {
    throw Error(ErrorCode::DegenerateLandmarks,
                "expected " + std::to_string(kLandmarkCount) + " landmarks, got " +
                    std::to_string(raw.size()),
                "landmarks");
  }
  return LandmarkSet(normalize_points(raw).points);
}

double landmark_loss(const LandmarkSet& m, const LandmarkSet& m_hat) {
  if (m.size() != m_hat.size()) {
    throw Error(ErrorCode::LengthMismatch, "landmark sets differ in size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) sum += (m.points()[i] - m_hat.points()[i]).squaredNorm();
  return sum;
}

double mse_distance(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_size(b.width, b.height) || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "images differ in size");
  }
  if (a.values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.values.size());
}

double one_minus_ssim_distance(const ImageBuffer& a, const ImageBuffer& b) {
  return 1.0 - ssim(a, b);
}

void validate(const FitConfig& cfg) {
  if (!(cfg.alpha1 >= 0.0) || !(cfg.alpha2 >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
  }
  if (!(cfg.learning_rate > 0.0) || cfg.max_iters <= 0 || cfg.alternation_period <= 0 ||
      !(cfg.convergence_tol >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "fit rates and iteration counts must be positive");
  }
}

double combined_loss(const ImageBuffer& target, const ImageBuffer& rendered, const LandmarkSet& m,
                     const LandmarkSet& m_hat, const FitConfig& cfg,
                     const PhotometricDistance& photometric) {
  if (!target.same_size(rendered.width, rendered.height)) {
    throw Error(ErrorCode::DimensionMismatch, "target and rendered images differ in size");
  }
  double photo = 0.0;
  if (cfg.alpha1 != 0.0) {
    if (!photometric) throw Error(ErrorCode::InvalidArgument, "no photometric distance supplied");
    photo = photometric(target, rendered);
  }
  return cfg.alpha1 * photo + cfg.alpha2 * landmark_loss(m, m_hat);
}

std::vector<Eigen::Vector3d> observe_keypoints(std::span<const Eigen::Vector3d> geometry,
                                               const CameraParams& cam) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(geometry.size());
  for (const auto& p : geometry) {
    const Eigen::Vector3d c = cam.to_camera(p);
    if (!(c.z() > kDepthEpsilon)) {
      throw Error(ErrorCode::NonPositiveDepth, "landmark behind the camera");
    }
    out.emplace_back(cam.principal_point.x() + cam.focal * c.x() / c.z(),
                     cam.principal_point.y() + cam.focal * c.y() / c.z(),
                     cam.focal * c.z() / cam.tz());
  }
  return out;
}

CameraParams with_reparam_focal(CameraParams cam, const ReparamContext& ctx) {
  cam.focal = reparam_focal(ctx, cam.tz());
  return cam;
}

LandmarkGradient landmark_loss_gradient(std::span<const Eigen::Vector3d> geometry,
                                        const LandmarkSet& observed, const CameraParams& cam,
                                        const ReparamContext& ctx) {
  if (geometry.size() != observed.size()) {
    throw Error(ErrorCode::LengthMismatch, "reference geometry and observed landmarks differ in size");
  }
  const std::size_t count = geometry.size();
  const double f = cam.focal;
  const double tz = cam.tz();
  const double dfdtz = reparam_focal_derivative(ctx);

  std::vector<Eigen::Vector3d> rotated(count);
  std::vector<Eigen::Vector3d> cam_pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    rotated[i] = cam.rotation * geometry[i];
    cam_pts[i] = rotated[i] + cam.translation;
  }
  const Normalized n = normalize_points(observe_keypoints(geometry, cam));

  LandmarkGradient g;
  std::vector<Eigen::Vector3d> dn(count);
  double gd = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Vector3d r = n.points[i] - observed.points()[i];
    g.loss += r.squaredNorm();
    dn[i] = 2.0 * r;
    gd += dn[i].dot(n.centered[i]);
  }
  // Back through n_i = d_i / s with s the RMS radius, then through centring.
  const double s = n.rms;
  const double inv_n = 1.0 / static_cast<double>(count);
  std::vector<Eigen::Vector3d> dd(count);
  Eigen::Vector3d mean_dd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < count; ++i) {
    dd[i] = dn[i] / s - n.centered[i] * (gd * inv_n / (s * s * s));
    mean_dd += dd[i];
  }
  mean_dd *= inv_n;

  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Vector3d a = dd[i] - mean_dd;
    const Eigen::Vector3d& c = cam_pts[i];
    const double iz = 1.0 / c.z();
    // b = (dk/dc)^T a
    const Eigen::Vector3d b(f * iz * a.x(), f * iz * a.y(),
                            -f * c.x() * iz * iz * a.x() - f * c.y() * iz * iz * a.y() + f / tz * a.z());
    g.translation += b;
    g.rotation += rotated[i].cross(b);
    const Eigen::Vector3d dk_df(c.x() * iz, c.y() * iz, c.z() / tz);
    g.translation.z() += a.dot(dk_df) * dfdtz - a.z() * f * c.z() / (tz * tz);
  }
  return g;
}

namespace {

enum class Block { Rotation, Translation };

CameraParams step_camera(const CameraParams& cam, Block block, const Eigen::Vector3d& delta,
                         const ReparamContext& ctx) {
  CameraParams out = cam;
  if (block == Block::Rotation) {
    out.rotation = rotation_from_axis_angle(delta) * cam.rotation;
  } else {
    out.translation += delta;
    out.focal = reparam_focal(ctx, out.tz());
  }
  return out;
}

}  // namespace

FitResult fit_camera(std::span<const Eigen::Vector3d> reference_geometry,
                     const LandmarkSet& observed, const CameraParams& init,
                     const ReparamContext& ctx, const FitConfig& cfg,
                     const CameraObjective& photometric) {
  validate(init);
  validate(ctx);
  validate(cfg);
  if (reference_geometry.size() != observed.size()) {
    throw Error(ErrorCode::LengthMismatch, "reference geometry and observed landmarks differ in size");
  }
  const bool use_photo = cfg.alpha1 != 0.0 && static_cast<bool>(photometric);

  auto total_loss = [&](const CameraParams& cam) -> double {
    double loss = cfg.alpha2 * landmark_loss(normalize_landmarks(observe_keypoints(reference_geometry, cam)), observed);
    if (use_photo) loss += cfg.alpha1 * photometric(cam);
    return loss;
  };
  auto gradient = [&](const CameraParams& cam, Block block) -> Eigen::Vector3d {
    const LandmarkGradient lg = landmark_loss_gradient(reference_geometry, observed, cam, ctx);
    Eigen::Vector3d g = cfg.alpha2 * (block == Block::Rotation ? lg.rotation : lg.translation);
    if (use_photo) {
      constexpr double h = 1e-5;
      for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e[k] = h;
        const double plus = photometric(step_camera(cam, block, e, ctx));
        const double minus = photometric(step_camera(cam, block, -e, ctx));
        g[k] += cfg.alpha1 * (plus - minus) / (2.0 * h);
      }
    }
    return g;
  };

  FitResult result;
  CameraParams cam = with_reparam_focal(init, ctx);
  double loss = total_loss(cam);
  if (!std::isfinite(loss)) throw Error(ErrorCode::DivergedFit, "initial loss is not finite");
  const double initial_loss = loss;

  constexpr int kWindow = 10;
  constexpr int kMaxHalvings = 40;
  // Per-block step sizes: start at the learning rate, double after an
  // accepted step, halve while backtracking.
  double block_lr[2] = {cfg.learning_rate, cfg.learning_rate};
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Block block = (it / cfg.alternation_period) % 2 == 0 ? Block::Rotation : Block::Translation;
    const Eigen::Vector3d g = gradient(cam, block);
    if (!g.allFinite()) throw Error(ErrorCode::DivergedFit, "gradient is not finite");

    double& lr = block_lr[block == Block::Rotation ? 0 : 1];
    for (int h = 0; h < kMaxHalvings && g.squaredNorm() > 0.0; ++h, lr *= 0.5) {
      try {
        const CameraParams candidate = step_camera(cam, block, -lr * g, ctx);
        if (!(candidate.tz() > 0.0)) continue;
        const double cand_loss = total_loss(candidate);
        if (std::isfinite(cand_loss) && cand_loss <= loss) {
          cam = candidate;
          loss = cand_loss;
          lr *= 2.0;
          break;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EyesBehindCamera && e.code() != ErrorCode::NonPositiveDepth) throw;
      }
    }
    if (!std::isfinite(loss)) throw Error(ErrorCode::DivergedFit, "loss became non-finite");

    result.loss_trace.push_back(loss);
    result.tz_trace.push_back(cam.tz());
    result.focal_trace.push_back(cam.focal);
    const int done = it + 1;
    if (done >= kWindow) {
      const double before = done > kWindow ? result.loss_trace[done - kWindow - 1] : initial_loss;
      const double change = before - loss;
      if (change <= cfg.convergence_tol * std::max(before, std::numeric_limits<double>::min())) {
        result.converged = true;
        break;
      }
    }
  }
  result.camera = cam;
  result.iterations_run = static_cast<int>(result.loss_trace.size());
  return result;
}

}  // namespace persview
