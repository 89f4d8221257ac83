// Scanline-free half-space rasterizer over the range grid mesh.
//
// Vertices are snapped to a 1/256 pixel grid so edge functions are exact
// integers; together with the top-left fill rule this makes shared edges
// watertight. Depth and texture coordinates are interpolated perspective
// correctly (1/z weighted barycentrics).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>

#include "persview/error.hpp"
#include "persview/mesh_warp.hpp"

namespace persview {

namespace {

// Keeps edge-function products inside int64.
constexpr double kMaxScreenCoord = 1 << 19;

struct FaceSetup {
  int id = 0;
  std::int64_t x[3]{};
  std::int64_t y[3]{};
  std::int64_t area = 0;
  double inv_z[3]{};
  Eigen::Vector2d uv_over_z[3];
  int min_px = 0, max_px = -1, min_py = 0, max_py = -1;
  bool top_left[3]{};  // edge i runs from vertex i+1 to vertex i+2
};

std::int64_t edge(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by,
                  std::int64_t px, std::int64_t py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Interior is on the positive side; y grows downwards.
bool is_top_left(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by) {
  const std::int64_t dx = bx - ax;
  const std::int64_t dy = by - ay;
  return (dy == 0 && dx > 0) || dy < 0;
}

// First pixel index whose centre (i*S + S/2) is >= v.
int first_pixel_at_or_after(std::int64_t v) {
  const std::int64_t n = v - kSubpixelScale / 2;
  return static_cast<int>(n >= 0 ? (n + kSubpixelScale - 1) / kSubpixelScale
                                  : -((-n) / kSubpixelScale));
}

int last_pixel_at_or_before(std::int64_t v) {
  const std::int64_t n = v - kSubpixelScale / 2;
  return static_cast<int>(n >= 0 ? n / kSubpixelScale
                                  : -((-n + kSubpixelScale - 1) / kSubpixelScale));
}

bool setup_face(const RangeGridMesh& mesh, std::size_t f, const CameraParams& cam, FaceSetup& s) {
  const Face& tri = mesh.faces[f];
  double sx[3], sy[3];
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d c = cam.to_camera(mesh.vertices[tri[i]]);
    if (!(c.z() > kDepthEpsilon)) return false;
    sx[i] = cam.principal_point.x() + cam.focal * c.x() / c.z();
    sy[i] = cam.principal_point.y() + cam.focal * c.y() / c.z();
    if (!(std::abs(sx[i]) < kMaxScreenCoord && std::abs(sy[i]) < kMaxScreenCoord)) return false;
    s.x[i] = std::llround(sx[i] * kSubpixelScale);
    s.y[i] = std::llround(sy[i] * kSubpixelScale);
    s.inv_z[i] = 1.0 / c.z();
    s.uv_over_z[i] = mesh.texcoords[tri[i]] * s.inv_z[i];
  }
  s.id = static_cast<int>(f);
  s.area = edge(s.x[0], s.y[0], s.x[1], s.y[1], s.x[2], s.y[2]);
  if (s.area == 0) return false;
  if (s.area < 0) {
    std::swap(s.x[1], s.x[2]);
    std::swap(s.y[1], s.y[2]);
    std::swap(s.inv_z[1], s.inv_z[2]);
    std::swap(s.uv_over_z[1], s.uv_over_z[2]);
    s.area = -s.area;
  }
  for (int i = 0; i < 3; ++i) {
    const int a = (i + 1) % 3;
    const int b = (i + 2) % 3;
    s.top_left[i] = is_top_left(s.x[a], s.y[a], s.x[b], s.y[b]);
  }
  const auto [xmin, xmax] = std::minmax({s.x[0], s.x[1], s.x[2]});
  const auto [ymin, ymax] = std::minmax({s.y[0], s.y[1], s.y[2]});
  s.min_px = std::max(first_pixel_at_or_after(xmin), 0);
  s.max_px = std::min(last_pixel_at_or_before(xmax), cam.width - 1);
  s.min_py = std::max(first_pixel_at_or_after(ymin), 0);
  s.max_py = std::min(last_pixel_at_or_before(ymax), cam.height - 1);
  return s.min_px <= s.max_px && s.min_py <= s.max_py;
}

void raster_band(const std::vector<FaceSetup>& setups, int row_begin, int row_end,
                 const ImageBuffer& source, RenderOutput& out) {
  const int width = out.width;
  std::vector<Eigen::Vector2d> uv(static_cast<std::size_t>(row_end - row_begin) * width);
  for (const FaceSetup& s : setups) {
    const int y0 = std::max(s.min_py, row_begin);
    const int y1 = std::min(s.max_py, row_end - 1);
    for (int py = y0; py <= y1; ++py) {
      const std::int64_t cy = py * kSubpixelScale + kSubpixelScale / 2;
      for (int px = s.min_px; px <= s.max_px; ++px) {
        const std::int64_t cx = px * kSubpixelScale + kSubpixelScale / 2;
        std::int64_t w[3];
        bool inside = true;
        for (int i = 0; i < 3 && inside; ++i) {
          const int a = (i + 1) % 3;
          const int b = (i + 2) % 3;
          w[i] = edge(s.x[a], s.y[a], s.x[b], s.y[b], cx, cy);
          inside = w[i] > 0 || (w[i] == 0 && s.top_left[i]);
        }
        if (!inside) continue;
        const double inv_area = 1.0 / static_cast<double>(s.area);
        double b[3];
        for (int i = 0; i < 3; ++i) b[i] = static_cast<double>(w[i]) * inv_area;
        const double inv_depth = b[0] * s.inv_z[0] + b[1] * s.inv_z[1] + b[2] * s.inv_z[2];
        const double depth = 1.0 / inv_depth;
        const std::size_t idx = out.index(px, py);
        if (!(depth < out.zbuffer[idx])) continue;
        out.zbuffer[idx] = depth;
        out.face_id[idx] = s.id;
        uv[static_cast<std::size_t>(py - row_begin) * width + px] =
            (b[0] * s.uv_over_z[0] + b[1] * s.uv_over_z[1] + b[2] * s.uv_over_z[2]) * depth;
      }
    }
  }
  for (int py = row_begin; py < row_end; ++py) {
    for (int px = 0; px < width; ++px) {
      const std::size_t idx = out.index(px, py);
      if (out.face_id[idx] == kNoFace) continue;
      out.coverage[idx] = 1;
      const auto rgb = sample_bilinear(source, uv[static_cast<std::size_t>(py - row_begin) * width + px]);
      for (int c = 0; c < 3; ++c) out.color.at(px, py, c) = rgb[c];
    }
  }
}

}  // namespace

int default_raster_threads() {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PERSVIEW_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) threads = threads > 0 ? std::min(threads, cap) : cap;
    } catch (const std::exception&) {
      // Unparseable values are ignored.
    }
  }
  return std::max(threads, 1);
}

std::array<float, 3> sample_bilinear(const ImageBuffer& image, const Eigen::Vector2d& uv) {
  const double fx = std::clamp(uv.x() * image.width - 0.5, 0.0, image.width - 1.0);
  const double fy = std::clamp(uv.y() * image.height - 0.5, 0.0, image.height - 1.0);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  std::array<float, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double top = image.at(x0, y0, c) * (1.0 - ax) + image.at(x1, y0, c) * ax;
    const double bottom = image.at(x0, y1, c) * (1.0 - ax) + image.at(x1, y1, c) * ax;
    rgb[c] = static_cast<float>(top * (1.0 - ay) + bottom * ay);
  }
  return rgb;
}

RenderOutput rasterize(const RangeGridMesh& mesh, const ImageBuffer& source,
                       const CameraParams& novel_cam, RasterOptions options) {
  if (!mesh.texcoords_set) {
    throw Error(ErrorCode::InvalidArgument, "rasterize requires texture coordinates");
  }
  if (source.width <= 0 || source.height <= 0 ||
      source.values.size() != static_cast<std::size_t>(source.width) * source.height * 3) {
    throw Error(ErrorCode::DimensionMismatch, "malformed source image", "source");
  }
  validate(novel_cam);

  std::size_t renderable = 0;
  std::vector<FaceSetup> setups;
  setups.reserve(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (!mesh.face_renderable(f)) continue;
    ++renderable;
    FaceSetup s;
    if (setup_face(mesh, f, novel_cam, s)) setups.push_back(s);
  }
  if (renderable == 0) {
    throw Error(ErrorCode::EmptyMesh, "no renderable faces after culling");
  }

  RenderOutput out;
  out.width = novel_cam.width;
  out.height = novel_cam.height;
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  out.color = ImageBuffer(out.width, out.height, 0.0f);
  out.zbuffer.assign(n, std::numeric_limits<double>::infinity());
  out.face_id.assign(n, kNoFace);
  out.coverage.assign(n, 0);

  // Bands own disjoint rows, so each pixel sees the faces in the same order
  // as the sequential pass and results are bit-identical.
  const int threads = std::clamp(options.threads > 0 ? options.threads : default_raster_threads(),
                                 1, out.height);
  if (threads == 1) {
    raster_band(setups, 0, out.height, source, out);
    return out;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int begin = out.height * t / threads;
    const int end = out.height * (t + 1) / threads;
    workers.emplace_back([&, begin, end] { raster_band(setups, begin, end, source, out); });
  }
  workers.clear();
  return out;
}

}  // namespace persview
