#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "persview/camera_fit.hpp"
#include "persview/compositor.hpp"
#include "persview/mesh_warp.hpp"
#include "persview/session_io.hpp"

namespace persview {

// Novel camera expressed as deltas from the original one. Rotations orbit
// the mesh centroid; tz is an absolute distance or the halving rule.
struct NovelView {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  std::optional<double> tz;
  bool tz_half = false;
};

struct PipelineConfig {
  NovelView view;
  double cull_deg = 80.0;
  int bilateral_k = 5;
  double sigma_color = 0.1;
  double sigma_space = 1.0;
  int levels = 3;
  int erode = 2;
  int blur = 5;
  FitConfig fit;
  std::filesystem::path out_dir;
  bool dry_run = false;
  int threads = 0;

  // Throws InvalidArgument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

struct StageTiming {
  std::string stage;
  double millis = 0.0;
};

// Camera-independent stages, computed once per session.
struct PreparedScene {
  DepthMap smoothed;
  RangeGridMesh mesh;  // texcoords assigned from the original camera
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  ReparamContext reparam;
  std::size_t face_pixels = 0;  // valid depth pixels after matting
  std::vector<StageTiming> timings;
};

// Bundle reparam context, or one anchored at the mesh centroid depth.
ReparamContext effective_reparam(const SessionBundle& bundle, const Eigen::Vector3d& centroid);

PreparedScene prepare_scene(const SessionBundle& bundle, const PipelineConfig& cfg);

CameraParams novel_camera(const CameraParams& original, const PreparedScene& scene,
                          const NovelView& view);

struct ViewResult {
  CameraParams camera;
  RangeGridMesh mesh;  // culled, with visibility
  RenderOutput render;
  BlendMask visibility;  // binary, before erosion and blur
  BlendMask composition;
  std::optional<ImageBuffer> blended;
  double visible_fraction = 0.0;
  std::vector<StageTiming> timings;
};

// Cull, rasterize, visibility, mask and (when `blend`) Laplacian blend.
ViewResult render_view(const SessionBundle& bundle, const PreparedScene& scene,
                       const CameraParams& novel, const PipelineConfig& cfg, bool blend);

}  // namespace persview
