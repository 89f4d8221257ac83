#pragma once

// Reference implementations used only by tests. Each one takes a deliberately
// different route from the library code it checks (brute force, non-separable,
// ray casting) so agreement means something.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "persview/camera.hpp"
#include "persview/compositor.hpp"
#include "persview/image.hpp"
#include "persview/mesh_warp.hpp"

namespace oracle {

// Per-pixel depth of every renderable face whose snapped footprint owns the
// pixel centre.
struct Coverage {
  struct Hit {
    int face;
    double depth;
  };
  int width = 0;
  int height = 0;
  std::vector<std::vector<Hit>> hits;
};

Coverage brute_force_coverage(const persview::RangeGridMesh& mesh, const persview::CameraParams& cam);

// Visible iff the vertex projects into the frame and no renderable face other
// than its own is pierced by the eye ray before depth (1 - tol).
std::vector<std::uint8_t> ray_cast_visibility(const persview::RangeGridMesh& mesh,
                                              const persview::CameraParams& cam, double tol);

persview::DepthMap bilateral(const persview::DepthMap& depth, int kernel, double sigma_color,
                             double sigma_space);

// Binary erosion and box blur by direct 2D window scans.
persview::BlendMask erode_blur(const persview::BlendMask& mask, int erode_px, int blur_px);

// Full 5x5 binomial followed by decimation.
persview::Plane pyramid_down(const persview::Plane& p);

// Warps `source` as seen by `from` into `to`, assuming every pixel lies on the
// world plane n.x = offset. Pixels whose ray misses the plane keep `fill`.
persview::ImageBuffer plane_homography_warp(const persview::ImageBuffer& source,
                                            const persview::CameraParams& from,
                                            const persview::CameraParams& to,
                                            const Eigen::Vector3d& n, double offset,
                                            std::vector<std::uint8_t>* inside = nullptr);

// Random triangle soup in front of `cam`, with texcoords, at most size x size
// pixels of footprint.
persview::RangeGridMesh random_mesh(std::mt19937_64& rng, const persview::CameraParams& cam, int faces);

persview::CameraParams square_camera(int size, double tz = 2.0);

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  ScratchDir();
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
