#include "persview/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "persview/error.hpp"

namespace persview {

namespace {

constexpr double kRidgeHeight = 0.3;
constexpr double kRidgeHalfWidth = 0.5;
constexpr double kTexelWavelengthPx = 14.0;

std::optional<double> hit_plane(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                const Eigen::Vector3d& n, double offset) {
  // Plane n.x = offset.
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = (offset - n.dot(o)) / denom;
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

}  // namespace

FixtureKind parse_fixture_kind(std::string_view name) {
  if (name == "plane") return FixtureKind::Plane;
  if (name == "ridge") return FixtureKind::Ridge;
  if (name == "sphere-cap") return FixtureKind::SphereCap;
  throw Error(ErrorCode::InvalidArgument, "unknown fixture kind '" + std::string(name) + "'");
}

std::string_view to_string(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::Plane: return "plane";
    case FixtureKind::Ridge: return "ridge";
    case FixtureKind::SphereCap: return "sphere-cap";
  }
  return "unknown";
}

FixtureScene::FixtureScene(FixtureKind kind, int size) : kind_(kind), size_(size) {
  if (size < kMinSize) {
    throw Error(ErrorCode::InvalidArgument,
                "fixture size must be at least " + std::to_string(kMinSize));
  }
  camera_.rotation = Eigen::Matrix3d::Identity();
  camera_.translation = Eigen::Vector3d(0.0, 0.0, kCameraDistance);
  camera_.focal = size;
  camera_.principal_point = Eigen::Vector2d(size / 2.0, size / 2.0);
  camera_.width = size;
  camera_.height = size;

  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  int count = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (auto p = surface_at_pixel(camera_, {x + 0.5, y + 0.5})) {
        sum += *p;
        ++count;
      }
    }
  }
  centroid_ = sum / count;
}

std::optional<Eigen::Vector3d> FixtureScene::intersect(const Eigen::Vector3d& o,
                                                       const Eigen::Vector3d& d) const {
  std::optional<double> best;
  auto consider = [&](std::optional<double> t, auto&& inside) {
    if (!t) return;
    const Eigen::Vector3d p = o + *t * d;
    if (inside(p) && (!best || *t < *best)) best = t;
  };
  switch (kind_) {
    case FixtureKind::Plane:
      consider(hit_plane(o, d, Eigen::Vector3d::UnitZ(), 0.0), [](const Eigen::Vector3d&) { return true; });
      break;
    case FixtureKind::Ridge: {
      // z = -h (1 - |x|/w) inside the ridge, 0 outside.
      const double h = kRidgeHeight, w = kRidgeHalfWidth;
      consider(hit_plane(o, d, Eigen::Vector3d::UnitZ(), 0.0),
               [&](const Eigen::Vector3d& p) { return std::abs(p.x()) >= w; });
      consider(hit_plane(o, d, Eigen::Vector3d(-h / w, 0.0, 1.0), -h),
               [&](const Eigen::Vector3d& p) { return p.x() >= 0.0 && p.x() < w; });
      consider(hit_plane(o, d, Eigen::Vector3d(h / w, 0.0, 1.0), -h),
               [&](const Eigen::Vector3d& p) { return p.x() < 0.0 && p.x() > -w; });
      break;
    }
    case FixtureKind::SphereCap: {
      const Eigen::Vector3d oc = o - sphere_center();
      const double a = d.squaredNorm();
      const double b = oc.dot(d);
      const double c = oc.squaredNorm() - sphere_radius() * sphere_radius();
      const double disc = b * b - a * c;
      if (disc < 0.0) break;
      const double t = (-b - std::sqrt(disc)) / a;
      consider(t > 0.0 ? std::optional<double>(t) : std::nullopt,
               [](const Eigen::Vector3d& p) { return p.z() <= 0.0; });
      break;
    }
  }
  if (!best) return std::nullopt;
  return o + *best * d;
}

std::optional<Eigen::Vector3d> FixtureScene::surface_at_pixel(const CameraParams& cam,
                                                              const Eigen::Vector2d& pixel) const {
  const Eigen::Vector2d n = (pixel - cam.principal_point) / cam.focal;
  const Eigen::Vector3d dir = cam.rotation.transpose() * Eigen::Vector3d(n.x(), n.y(), 1.0);
  return intersect(cam.center(), dir);
}

std::array<float, 3> FixtureScene::texture(const Eigen::Vector3d& p) const {
  const double pixel_world = kCameraDistance / size_;
  const double k = 2.0 * std::numbers::pi / (kTexelWavelengthPx * pixel_world);
  return {static_cast<float>(0.5 + 0.3 * std::sin(k * p.x())),
          static_cast<float>(0.5 + 0.3 * std::sin(0.9 * k * p.y() + 1.0)),
          static_cast<float>(0.5 + 0.25 * std::sin(0.7 * k * (p.x() + p.y()) + 2.0))};
}

ImageBuffer FixtureScene::render(const CameraParams& cam) const {
  ImageBuffer img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto p = surface_at_pixel(cam, {x + 0.5, y + 0.5});
      const auto rgb = p ? texture(*p) : kBackground;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
    }
  }
  return img;
}

DepthMap FixtureScene::depth(const CameraParams& cam) const {
  DepthMap d(cam.width, cam.height, 0.0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto p = surface_at_pixel(cam, {x + 0.5, y + 0.5});
      const std::size_t i = d.index(x, y);
      if (p) {
        d.values[i] = cam.to_camera(*p).z();
        d.valid[i] = 1;
      } else {
        d.values[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return d;
}

CameraParams orbit_camera(const CameraParams& cam, const Eigen::Vector3d& pivot, double yaw_deg,
                          double pitch_deg, double roll_deg) {
  const Eigen::Matrix3d q = rotation_from_ypr_deg(yaw_deg, pitch_deg, roll_deg);
  const Eigen::Vector3d pivot_cam = cam.to_camera(pivot);
  CameraParams out = cam;
  out.rotation = q.transpose() * cam.rotation;
  out.translation = q.transpose() * (cam.translation - pivot_cam) + pivot_cam;
  return out;
}

SessionBundle make_fixture(FixtureKind kind, int size, const FixtureOptions& options) {
  const FixtureScene scene(kind, size);
  const CameraParams& cam = scene.camera();

  SessionBundle b;
  b.original_camera = cam;
  b.source_image = scene.render(cam);
  b.depth = scene.depth(cam);
  GrayImage matte(size, size);
  for (std::size_t i = 0; i < matte.values.size(); ++i) matte.values[i] = b.depth.valid[i] ? 1.0f : 0.0f;
  b.matte = std::move(matte);

  ReferenceView view;
  view.camera = orbit_camera(cam, scene.centroid(), options.reference_yaw_deg, 0.0, 0.0);
  view.image = scene.render(view.camera);

  // Stand-in for the generator output at the novel view: the true view with
  // its detail softened by a 3x3 box filter.
  ImageBuffer generated(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            acc += view.image.at(std::clamp(x + dx, 0, size - 1), std::clamp(y + dy, 0, size - 1), c);
          }
        }
        generated.at(x, y, c) = static_cast<float>(acc / 9.0);
      }
    }
  }
  b.generated_image = std::move(generated);
  b.reference_view = std::move(view);

  // Landmarks on a golden-angle spiral over the central disc.
  std::vector<Eigen::Vector3d> geometry;
  geometry.reserve(kLandmarkCount);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const Eigen::Vector2d center(size / 2.0, size / 2.0);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const double r = 0.3 * size * std::sqrt((i + 0.5) / kLandmarkCount);
    const double a = golden * static_cast<double>(i);
    const auto p = scene.surface_at_pixel(cam, center + r * Eigen::Vector2d(std::cos(a), std::sin(a)));
    if (!p) throw Error(ErrorCode::InvalidArgument, "landmark ray missed the fixture surface");
    geometry.push_back(*p);
  }
  b.landmarks = normalize_landmarks(observe_keypoints(geometry, cam));
  b.reference_geometry = std::move(geometry);

  double eye_depth = 0.0;
  for (double ex : {0.35, 0.65}) {
    const auto p = scene.surface_at_pixel(cam, {ex * size, 0.4 * size});
    eye_depth += cam.to_camera(*p).z() / 2.0;
  }
  b.reparam = ReparamContext{eye_depth, cam.focal, cam.tz()};
  return b;
}

}  // namespace persview
