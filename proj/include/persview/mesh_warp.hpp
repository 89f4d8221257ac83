#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "persview/camera.hpp"
#include "persview/image.hpp"

namespace persview {

// Row-major depth in scene units. A pixel is usable only when `valid` is set.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0);

  // Marks non-finite and non-positive samples invalid.
  static DepthMap from_values(int w, int h, std::vector<double> values);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  double at(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
};

struct GridCoord {
  int row = 0;
  int col = 0;
};

using Face = std::array<int, 3>;

struct RangeGridMesh {
  int grid_width = 0;
  int grid_height = 0;
  std::vector<Eigen::Vector3d> vertices;
  std::vector<GridCoord> grid_index;
  std::vector<Face> faces;

  // Filled by compute_texcoords; texcoord_valid is cleared for vertices
  // behind the original camera.
  bool texcoords_set = false;
  std::vector<Eigen::Vector2d> texcoords;
  std::vector<std::uint8_t> texcoord_valid;

  std::vector<std::uint8_t> vertex_visible;
  std::vector<std::uint8_t> face_culled;

  // A face is drawn when it is not culled and all its corners carry texcoords.
  bool face_renderable(std::size_t f) const;
  Eigen::Vector3d face_centroid(std::size_t f) const;
  // Unnormalised; points towards the camera that produced the grid.
  Eigen::Vector3d face_normal(std::size_t f) const;
};

inline constexpr int kNoFace = -1;

struct RenderOutput {
  int width = 0;
  int height = 0;
  ImageBuffer color;
  std::vector<double> zbuffer;  // +inf where empty
  std::vector<int> face_id;     // kNoFace where empty
  std::vector<std::uint8_t> coverage;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

DepthMap smooth_depth_bilateral(const DepthMap& depth, int kernel = 5, double sigma_color = 0.1,
                                double sigma_space = 1.0);

RangeGridMesh depth_to_range_grid(const DepthMap& depth, const CameraParams& cam);

RangeGridMesh compute_texcoords(RangeGridMesh mesh, const CameraParams& original_cam);

// Angle in degrees between a face normal and the direction back along the
// camera's optical axis.
double face_view_angle_deg(const RangeGridMesh& mesh, std::size_t f, const CameraParams& cam);

RangeGridMesh cull_grazing_faces(RangeGridMesh mesh, const CameraParams& novel_cam,
                                 double threshold_deg = 80.0);

struct RasterOptions {
  // 0 selects PERSVIEW_THREADS or the hardware concurrency.
  int threads = 0;
};

int default_raster_threads();

// Rasterizer vertex positions are snapped to 1/kSubpixelScale of a pixel.
inline constexpr int kSubpixelBits = 8;
inline constexpr std::int64_t kSubpixelScale = std::int64_t{1} << kSubpixelBits;

RenderOutput rasterize(const RangeGridMesh& mesh, const ImageBuffer& source,
                       const CameraParams& novel_cam, RasterOptions options = {});

// Bilinear lookup at normalised coordinates with edge clamping.
std::array<float, 3> sample_bilinear(const ImageBuffer& image, const Eigen::Vector2d& uv);

inline constexpr double kVisibilityTolerance = 1e-3;

// A vertex is visible when it projects into the frame and no drawn face near
// its pixel, other than its own, spans its exact projected position at a
// depth nearer than z (1 - tolerance).
RangeGridMesh vertex_visibility(RangeGridMesh mesh, const RenderOutput& render,
                                const CameraParams& novel_cam);

// Debug export: positions, uvs, faces.
void write_obj(const RangeGridMesh& mesh, const std::filesystem::path& path);

}  // namespace persview
