#include "persview/mesh_warp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "persview/error.hpp"

namespace persview {

DepthMap::DepthMap(int w, int h, double fill)
    : width(w),
      height(h),
      values(static_cast<std::size_t>(w) * h, fill),
      valid(static_cast<std::size_t>(w) * h, fill > 0.0 && std::isfinite(fill) ? 1 : 0) {}

DepthMap DepthMap::from_values(int w, int h, std::vector<double> values) {
  if (w <= 0 || h <= 0 || values.size() != static_cast<std::size_t>(w) * h) {
    throw Error(ErrorCode::DimensionMismatch, "depth values do not match width*height", "depth");
  }
  DepthMap d;
  d.width = w;
  d.height = h;
  d.valid.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    d.valid[i] = std::isfinite(values[i]) && values[i] > 0.0 ? 1 : 0;
  }
  d.values = std::move(values);
  return d;
}

bool RangeGridMesh::face_renderable(std::size_t f) const {
  if (!face_culled.empty() && face_culled[f]) return false;
  if (!texcoords_set) return false;
  const Face& t = faces[f];
  return texcoord_valid[t[0]] && texcoord_valid[t[1]] && texcoord_valid[t[2]];
}

Eigen::Vector3d RangeGridMesh::face_centroid(std::size_t f) const {
  const Face& t = faces[f];
  return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

Eigen::Vector3d RangeGridMesh::face_normal(std::size_t f) const {
  const Face& t = faces[f];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
}

namespace {

double median_of_valid(const DepthMap& d) {
  std::vector<double> v;
  v.reserve(d.values.size());
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.valid[i]) v.push_back(d.values[i]);
  }
  if (v.empty()) return 1.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

DepthMap smooth_depth_bilateral(const DepthMap& depth, int kernel, double sigma_color,
                                double sigma_space) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw Error(ErrorCode::BadKernel, "bilateral kernel must be odd and positive");
  }
  if (!(sigma_color > 0.0) || !(sigma_space > 0.0)) {
    throw Error(ErrorCode::BadKernel, "bilateral sigmas must be positive");
  }
  // Range term on median-normalised depth so sigma_color is scale free.
  const double scale = median_of_valid(depth);
  const double inv_color = 1.0 / (2.0 * sigma_color * sigma_color * scale * scale);
  const double inv_space = 1.0 / (2.0 * sigma_space * sigma_space);
  const int radius = kernel / 2;

  std::vector<double> spatial(static_cast<std::size_t>(kernel) * kernel);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      spatial[static_cast<std::size_t>(dy + radius) * kernel + (dx + radius)] =
          std::exp(-(dx * dx + dy * dy) * inv_space);
    }
  }

  DepthMap out = depth;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double center = depth.at(x, y);
      double acc = 0.0;
      double norm = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= depth.height) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= depth.width || !depth.is_valid(xx, yy)) continue;
          const double v = depth.at(xx, yy);
          const double diff = v - center;
          const double w = spatial[static_cast<std::size_t>(dy + radius) * kernel + (dx + radius)] *
                           std::exp(-diff * diff * inv_color);
          acc += w * v;
          norm += w;
        }
      }
      out.values[depth.index(x, y)] = acc / norm;
    }
  }
  return out;
}

RangeGridMesh depth_to_range_grid(const DepthMap& depth, const CameraParams& cam) {
  if (depth.width <= 0 || depth.height <= 0 ||
      depth.values.size() != static_cast<std::size_t>(depth.width) * depth.height ||
      depth.valid.size() != depth.values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "malformed depth map", "depth");
  }
  RangeGridMesh mesh;
  mesh.grid_width = depth.width;
  mesh.grid_height = depth.height;

  std::vector<int> vertex_of(depth.values.size(), -1);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      vertex_of[depth.index(x, y)] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(backproject(Eigen::Vector2d(x + 0.5, y + 0.5), depth.at(x, y), cam));
      mesh.grid_index.push_back({y, x});
    }
  }

  // Split every fully valid 2x2 block along its top-left/bottom-right
  // diagonal, wound so normals face the source camera.
  for (int y = 0; y + 1 < depth.height; ++y) {
    for (int x = 0; x + 1 < depth.width; ++x) {
      const int tl = vertex_of[depth.index(x, y)];
      const int tr = vertex_of[depth.index(x + 1, y)];
      const int bl = vertex_of[depth.index(x, y + 1)];
      const int br = vertex_of[depth.index(x + 1, y + 1)];
      if (tl < 0 || tr < 0 || bl < 0 || br < 0) continue;
      mesh.faces.push_back({tl, bl, br});
      mesh.faces.push_back({tl, br, tr});
    }
  }
  if (mesh.faces.empty()) {
    throw Error(ErrorCode::DegenerateDepth, "depth map has no 2x2 block of valid pixels", "depth");
  }
  mesh.vertex_visible.assign(mesh.vertices.size(), 1);
  mesh.face_culled.assign(mesh.faces.size(), 0);
  mesh.texcoords.assign(mesh.vertices.size(), Eigen::Vector2d::Zero());
  mesh.texcoord_valid.assign(mesh.vertices.size(), 0);
  return mesh;
}

RangeGridMesh compute_texcoords(RangeGridMesh mesh, const CameraParams& original_cam) {
  mesh.texcoords.assign(mesh.vertices.size(), Eigen::Vector2d::Zero());
  mesh.texcoord_valid.assign(mesh.vertices.size(), 0);
  if (mesh.vertex_visible.size() != mesh.vertices.size()) {
    mesh.vertex_visible.assign(mesh.vertices.size(), 1);
  }
  const Eigen::Vector2d resolution(original_cam.width, original_cam.height);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    try {
      const Eigen::Vector2d px = project(mesh.vertices[v], original_cam);
      mesh.texcoords[v] = px.cwiseQuotient(resolution);
      mesh.texcoord_valid[v] = 1;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDepth) throw;
      mesh.vertex_visible[v] = 0;
    }
  }
  mesh.texcoords_set = true;
  return mesh;
}

double face_view_angle_deg(const RangeGridMesh& mesh, std::size_t f, const CameraParams& cam) {
  const Eigen::Vector3d n = mesh.face_normal(f);
  // Camera -z axis expressed in world coordinates.
  const Eigen::Vector3d toward_camera = -cam.rotation.row(2).transpose();
  const double c = n.dot(toward_camera);
  const double s = n.cross(toward_camera).norm();
  if (c == 0.0 && s == 0.0) return 180.0;
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

RangeGridMesh cull_grazing_faces(RangeGridMesh mesh, const CameraParams& novel_cam,
                                 double threshold_deg) {
  // Absorbs rounding when a face sits exactly on the threshold.
  constexpr double kAngleSlackDeg = 1e-9;
  mesh.face_culled.assign(mesh.faces.size(), 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    mesh.face_culled[f] = face_view_angle_deg(mesh, f, novel_cam) > threshold_deg + kAngleSlackDeg;
  }
  return mesh;
}

RangeGridMesh vertex_visibility(RangeGridMesh mesh, const RenderOutput& render,
                                const CameraParams& novel_cam) {
  if (render.width != novel_cam.width || render.height != novel_cam.height) {
    throw Error(ErrorCode::DimensionMismatch, "render does not match the novel camera");
  }
  mesh.vertex_visible.assign(mesh.vertices.size(), 0);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (mesh.texcoords_set && !mesh.texcoord_valid[v]) continue;
    const Eigen::Vector3d c = novel_cam.to_camera(mesh.vertices[v]);
    if (!(c.z() > kDepthEpsilon)) continue;
    const double px = novel_cam.principal_point.x() + novel_cam.focal * c.x() / c.z();
    const double py = novel_cam.principal_point.y() + novel_cam.focal * c.y() / c.z();
    if (!(px >= 0.0 && py >= 0.0 && px < render.width && py < render.height)) continue;
    const int ix = static_cast<int>(std::floor(px));
    const int iy = static_cast<int>(std::floor(py));
    const Eigen::Vector3d ray((px - novel_cam.principal_point.x()) / novel_cam.focal,
                              (py - novel_cam.principal_point.y()) / novel_cam.focal, 1.0);
    // Candidate occluders: faces drawn around the projected position.
    int seen[9];
    int seen_count = 0;
    bool occluded = false;
    for (int dy = -1; dy <= 1 && !occluded; ++dy) {
      for (int dx = -1; dx <= 1 && !occluded; ++dx) {
        const int x = ix + dx;
        const int y = iy + dy;
        if (x < 0 || y < 0 || x >= render.width || y >= render.height) continue;
        const int f = render.face_id[render.index(x, y)];
        if (f == kNoFace || std::find(seen, seen + seen_count, f) != seen + seen_count) continue;
        seen[seen_count++] = f;
        const Face& face = mesh.faces[f];
        if (face[0] == static_cast<int>(v) || face[1] == static_cast<int>(v) || face[2] == static_cast<int>(v)) {
          continue;
        }
        Eigen::Vector3d corner[3];
        Eigen::Vector2d screen[3];
        for (int k = 0; k < 3; ++k) {
          corner[k] = novel_cam.to_camera(mesh.vertices[face[k]]);
          screen[k] = novel_cam.principal_point + novel_cam.focal * corner[k].head<2>() / corner[k].z();
        }
        // The face only occludes if it spans the exact projected position.
        const auto cross2 = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
          return a.x() * b.y() - a.y() * b.x();
        };
        const Eigen::Vector2d p(px, py);
        const double area = cross2(screen[1] - screen[0], screen[2] - screen[0]);
        if (area == 0.0) continue;
        const double b0 = cross2(screen[1] - p, screen[2] - p) / area;
        const double b1 = cross2(screen[2] - p, screen[0] - p) / area;
        const double b2 = 1.0 - b0 - b1;
        constexpr double kInsideSlack = -1e-9;
        if (b0 < kInsideSlack || b1 < kInsideSlack || b2 < kInsideSlack) continue;
        const Eigen::Vector3d n = (corner[1] - corner[0]).cross(corner[2] - corner[0]);
        const double denom = n.dot(ray);
        if (std::abs(denom) <= 1e-12 * n.norm()) continue;
        const double z = n.dot(corner[0]) / denom;
        occluded = z > 0.0 && c.z() > z + kVisibilityTolerance * c.z();
      }
    }
    mesh.vertex_visible[v] = !occluded;
  }
  return mesh;
}

void write_obj(const RangeGridMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  if (mesh.texcoords_set) {
    // OBJ uv origin is bottom-left.
    for (const auto& t : mesh.texcoords) out << "vt " << t.x() << ' ' << 1.0 - t.y() << '\n';
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    out << 'f';
    for (int i : t) {
      out << ' ' << i + 1;
      if (mesh.texcoords_set) out << '/' << i + 1;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

}  // namespace persview
