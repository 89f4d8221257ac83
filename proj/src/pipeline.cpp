#include "persview/pipeline.hpp"

#include <chrono>

#include "persview/error.hpp"
#include "persview/fixtures.hpp"

namespace persview {

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}
  template <typename F>
  auto run(const char* stage, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    auto result = [&] {
      try {
        return f();
      } catch (const Error& e) {
        throw Error(e.code(), std::string(stage) + ": " + e.what(), e.member());
      }
    }();
    const auto end = std::chrono::steady_clock::now();
    sink_.push_back({stage, std::chrono::duration<double, std::milli>(end - start).count()});
    return result;
  }

 private:
  std::vector<StageTiming>& sink_;
};

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidArgument, field + ": " + why, field);
}

}  // namespace

void PipelineConfig::validate() const {
  for (const auto& [name, v] : {std::pair{"yaw", view.yaw}, {"pitch", view.pitch}, {"roll", view.roll}}) {
    if (!(v >= -90.0 && v <= 90.0)) bad(name, "must lie in [-90, 90] degrees");
  }
  if (view.tz && !(*view.tz > 0.0)) bad("tz", "must be positive");
  if (view.tz && view.tz_half) bad("tz", "--tz and --tz-half are exclusive");
  if (!(cull_deg > 0.0 && cull_deg <= 90.0)) bad("cull_deg", "must lie in (0, 90]");
  if (bilateral_k < 1 || bilateral_k % 2 == 0) bad("bilateral_k", "must be odd and positive");
  if (!(sigma_color > 0.0)) bad("sigma_color", "must be positive");
  if (!(sigma_space > 0.0)) bad("sigma_space", "must be positive");
  if (levels < 1) bad("levels", "must be at least 1");
  if (erode < 0) bad("erode", "must be non-negative");
  if (blur < 1 || blur % 2 == 0) bad("blur", "must be odd and positive");
  try {
    persview::validate(fit);
  } catch (const Error& e) {
    bad("fit", e.what());
  }
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j{{"yaw", view.yaw},
                   {"pitch", view.pitch},
                   {"roll", view.roll},
                   {"tz", view.tz ? nlohmann::json(*view.tz) : nlohmann::json(nullptr)},
                   {"tz_half", view.tz_half},
                   {"cull_deg", cull_deg},
                   {"bilateral_k", bilateral_k},
                   {"sigma_color", sigma_color},
                   {"sigma_space", sigma_space},
                   {"levels", levels},
                   {"erode", erode},
                   {"blur", blur},
                   {"fit",
                    {{"alpha1", fit.alpha1},
                     {"alpha2", fit.alpha2},
                     {"learning_rate", fit.learning_rate},
                     {"max_iters", fit.max_iters},
                     {"alternation_period", fit.alternation_period},
                     {"convergence_tol", fit.convergence_tol}}}};
  return j;
}

ReparamContext effective_reparam(const SessionBundle& bundle, const Eigen::Vector3d& centroid) {
  if (bundle.reparam) return *bundle.reparam;
  const CameraParams& cam = bundle.original_camera;
  return ReparamContext{cam.to_camera(centroid).z(), cam.focal, cam.tz()};
}

PreparedScene prepare_scene(const SessionBundle& bundle, const PipelineConfig& cfg) {
  PreparedScene scene;
  DepthMap depth = bundle.depth;
  if (bundle.matte) {
    // Background pixels never enter the mesh.
    for (std::size_t i = 0; i < depth.valid.size(); ++i) {
      if (!(bundle.matte->values[i] > 0.5f)) depth.valid[i] = 0;
    }
  }
  for (auto v : depth.valid) scene.face_pixels += v;
  StageClock clock(scene.timings);
  scene.smoothed = clock.run("smooth", [&] {
    return smooth_depth_bilateral(depth, cfg.bilateral_k, cfg.sigma_color, cfg.sigma_space);
  });
  scene.mesh = clock.run("mesh", [&] {
    return compute_texcoords(depth_to_range_grid(scene.smoothed, bundle.original_camera),
                             bundle.original_camera);
  });
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& v : scene.mesh.vertices) sum += v;
  scene.centroid = sum / static_cast<double>(scene.mesh.vertices.size());
  scene.reparam = clock.run("reparam", [&] {
    ReparamContext ctx = effective_reparam(bundle, scene.centroid);
    validate(ctx);
    return ctx;
  });
  return scene;
}

CameraParams novel_camera(const CameraParams& original, const PreparedScene& scene,
                          const NovelView& view) {
  CameraParams cam = orbit_camera(original, scene.centroid, view.yaw, view.pitch, view.roll);
  double target = original.tz();
  if (view.tz_half) target = halve_distance_init(original.tz());
  if (view.tz) target = *view.tz;
  const double shift = target - original.tz();
  cam.translation.z() += shift;
  // Keep the eye-plane magnification of the original shot.
  cam.focal = original.focal * reparam_alpha(scene.reparam, scene.reparam.tz0 + shift);
  validate(cam);
  return cam;
}

ViewResult render_view(const SessionBundle& bundle, const PreparedScene& scene,
                       const CameraParams& novel, const PipelineConfig& cfg, bool blend) {
  if (blend && !bundle.generated_image) {
    throw Error(ErrorCode::MissingGenerated, "blending needs a generated image", "generated");
  }
  ViewResult r;
  r.camera = novel;
  StageClock clock(r.timings);
  r.mesh = clock.run("cull", [&] { return cull_grazing_faces(scene.mesh, novel, cfg.cull_deg); });
  r.render = clock.run("rasterize", [&] {
    return rasterize(r.mesh, bundle.source_image, novel, RasterOptions{cfg.threads});
  });
  r.mesh = clock.run("visibility", [&] { return vertex_visibility(std::move(r.mesh), r.render, novel); });
  r.visibility = clock.run("mask", [&] { return build_blend_mask(r.render, r.mesh); });
  r.composition = clock.run("dilate_blur", [&] { return dilate_and_blur(r.visibility, cfg.erode, cfg.blur); });

  std::size_t visible = 0;
  for (float w : r.visibility.weights) visible += w > 0.5f;
  r.visible_fraction =
      scene.face_pixels ? std::min(1.0, static_cast<double>(visible) / scene.face_pixels) : 0.0;

  if (blend) {
    if (!bundle.generated_image->same_size(novel.width, novel.height)) {
      throw Error(ErrorCode::DimensionMismatch, "generated image does not match the novel view", "generated");
    }
    r.blended = clock.run("blend", [&] {
      // Uncovered pixels carry background; replacing them with the generated
      // image keeps that false edge out of the coarse pyramid levels.
      ImageBuffer warped = r.render.color;
      const ImageBuffer& generated = *bundle.generated_image;
      for (std::size_t p = 0; p < r.render.coverage.size(); ++p) {
        if (r.render.coverage[p]) continue;
        for (int c = 0; c < ImageBuffer::channels; ++c) warped.values[p * 3 + c] = generated.values[p * 3 + c];
      }
      return laplacian_blend(warped, generated, r.composition, cfg.levels);
    });
  }
  return r;
}

}  // namespace persview
