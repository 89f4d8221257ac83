#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "persview/camera.hpp"
#include "persview/camera_fit.hpp"
#include "persview/image.hpp"
#include "persview/mesh_warp.hpp"

namespace persview {

inline constexpr int kManifestVersion = 1;

// A second, independently rendered view shipped with synthetic fixtures.
struct ReferenceView {
  ImageBuffer image;
  CameraParams camera;
};

struct SessionBundle {
  ImageBuffer source_image;
  DepthMap depth;
  std::optional<GrayImage> matte;
  std::optional<ImageBuffer> generated_image;
  CameraParams original_camera;
  std::optional<LandmarkSet> landmarks;
  std::optional<ReparamContext> reparam;
  // 3D scene-space keypoints used by camera fitting.
  std::optional<std::vector<Eigen::Vector3d>> reference_geometry;
  std::optional<ReferenceView> reference_view;
};

nlohmann::json camera_to_json(const CameraParams& cam);
// Throws CorruptMember("camera") on schema violations; does not validate.
CameraParams camera_from_json(const nlohmann::json& j);

nlohmann::json points_to_json(const std::vector<Eigen::Vector3d>& points);
std::vector<Eigen::Vector3d> points_from_json(const nlohmann::json& j, const std::string& member);

nlohmann::json reparam_to_json(const ReparamContext& ctx);
ReparamContext reparam_from_json(const nlohmann::json& j);

// Checks every cross-member invariant; throws DimensionMismatch(member) or
// CorruptMember(member).
void validate(const SessionBundle& bundle);

SessionBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const std::filesystem::path& dir, const SessionBundle& bundle);

// warped.png, blended.png, mask.png and zbuffer.pfm, each written atomically.
void save_outputs(const std::filesystem::path& dir, const RenderOutput& render,
                  const ImageBuffer& blend, const BlendMask& mask);

}  // namespace persview
