#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "oracles.hpp"
#include "persview/error.hpp"
#include "persview/fixtures.hpp"
#include "persview/image_io.hpp"
#include "persview/metrics.hpp"
#include "persview/pipeline.hpp"

using namespace persview;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

struct Run {
  SessionBundle bundle;
  PreparedScene scene;
  ViewResult view;
};

Run run(SessionBundle bundle, const PipelineConfig& cfg, bool blend = false) {
  Run r{std::move(bundle), {}, {}};
  r.scene = prepare_scene(r.bundle, cfg);
  r.view = render_view(r.bundle, r.scene, novel_camera(r.bundle.original_camera, r.scene, cfg.view), cfg, blend);
  return r;
}

BlendMask coverage_mask(const RenderOutput& r) {
  BlendMask m(r.width, r.height);
  for (std::size_t i = 0; i < r.coverage.size(); ++i) m.weights[i] = r.coverage[i] ? 1.0f : 0.0f;
  return m;
}

Eigen::Vector3d world_at(const DepthMap& d, const CameraParams& cam, int x, int y) {
  return backproject(Eigen::Vector2d(x + 0.5, y + 0.5), d.at(x, y), cam);
}

}  // namespace

TEST_CASE("fixtures: depth lies on the analytic surface") {
  for (int size : {16, 33, 64}) {
    const FixtureScene plane(FixtureKind::Plane, size);
    const FixtureScene ridge(FixtureKind::Ridge, size);
    const FixtureScene sphere(FixtureKind::SphereCap, size);
    const DepthMap dp = plane.depth(plane.camera());
    const DepthMap dr = ridge.depth(ridge.camera());
    const DepthMap ds = sphere.depth(sphere.camera());
    int sphere_valid = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        REQUIRE(dp.is_valid(x, y));
        CHECK(std::abs(world_at(dp, plane.camera(), x, y).z()) < 1e-9);
        REQUIRE(dr.is_valid(x, y));
        const Eigen::Vector3d pr = world_at(dr, ridge.camera(), x, y);
        // z = -0.3 (1 - |x| / 0.5) inside the ridge, else 0.
        const double want = std::abs(pr.x()) < 0.5 ? -0.3 * (1.0 - std::abs(pr.x()) / 0.5) : 0.0;
        CHECK(std::abs(pr.z() - want) < 1e-9);
        if (ds.is_valid(x, y)) {
          ++sphere_valid;
          const Eigen::Vector3d ps = world_at(ds, sphere.camera(), x, y);
          CHECK(std::abs((ps - Eigen::Vector3d(0, 0, 0.3)).norm() - 0.8) < 1e-6);
          CHECK(ps.z() <= 1e-9);
        }
      }
    }
    CHECK(sphere_valid > size * size / 4);
    CHECK(sphere_valid < size * size);
  }
}

TEST_CASE("fixtures: bundle contents and size limit") {
  const SessionBundle b = make_fixture(FixtureKind::SphereCap, 32);
  CHECK(b.source_image.same_size(32, 32));
  CHECK(b.original_camera.focal == 32.0);
  CHECK(b.original_camera.principal_point == Eigen::Vector2d(16.0, 16.0));
  CHECK(b.original_camera.tz() == 2.0);
  REQUIRE(b.landmarks);
  CHECK(b.landmarks->size() == kLandmarkCount);
  REQUIRE(b.reference_geometry);
  CHECK(b.reference_geometry->size() == kLandmarkCount);
  REQUIRE(b.reparam);
  CHECK(b.reparam->tz0 == 2.0);
  CHECK(b.reparam->f0 == 32.0);
  REQUIRE(b.generated_image);
  REQUIRE(b.reference_view);
  CHECK(rotation_angle_between(b.reference_view->camera.rotation, b.original_camera.rotation) * 180.0 /
            std::numbers::pi ==
        doctest::Approx(5.0));
  REQUIRE(b.matte);
  for (std::size_t i = 0; i < b.matte->values.size(); ++i) CHECK((b.matte->values[i] > 0.5f) == (b.depth.valid[i] != 0));
  CHECK(code_of([] { make_fixture(FixtureKind::Plane, 8); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_fixture_kind("cube"); }) == ErrorCode::InvalidArgument);
  CHECK(parse_fixture_kind("sphere-cap") == FixtureKind::SphereCap);
}

TEST_CASE("identity warp reproduces the source") {
  for (auto kind : {FixtureKind::Plane, FixtureKind::Ridge, FixtureKind::SphereCap}) {
    CAPTURE(to_string(kind));
    const auto t0 = std::chrono::steady_clock::now();
    const Run r = run(make_fixture(kind, 64), PipelineConfig{});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const BlendMask cov = coverage_mask(r.view.render);
    CHECK(psnr(r.view.render.color, r.bundle.source_image, &cov) >= 40.0);
    CHECK(secs < 1.0);
    CHECK(r.view.visible_fraction > 0.9);
  }
}

TEST_CASE("plane fixture follows the analytic homography") {
  PipelineConfig cfg;
  cfg.view.yaw = 5.0;
  const Run r = run(make_fixture(FixtureKind::Plane, 64), cfg);
  std::vector<std::uint8_t> inside;
  const ImageBuffer want = oracle::plane_homography_warp(r.bundle.source_image, r.bundle.original_camera,
                                                         r.view.camera, Eigen::Vector3d::UnitZ(), 0.0, &inside);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < inside.size(); ++p) {
    if (!inside[p] || !r.view.render.coverage[p]) continue;
    for (int c = 0; c < 3; ++c) sum += std::abs(r.view.render.color.values[p * 3 + c] - want.values[p * 3 + c]);
    n += 3;
  }
  REQUIRE(n > 64 * 64);
  CHECK(sum / n <= 2.0 / 255.0);
}

TEST_CASE("sphere-cap warp agrees with a direct render of the second view") {
  const SessionBundle b = make_fixture(FixtureKind::SphereCap, 64);
  PipelineConfig cfg;
  cfg.view.yaw = 5.0;
  const PreparedScene s = prepare_scene(b, cfg);
  // The pipeline orbits the mesh centroid, the fixture the analytic one.
  const CameraParams orbit = novel_camera(b.original_camera, s, cfg.view);
  CHECK((orbit.rotation - b.reference_view->camera.rotation).norm() < 1e-9);
  CHECK((orbit.translation - b.reference_view->camera.translation).norm() < 1e-3);
  const ViewResult v = render_view(b, s, b.reference_view->camera, cfg, false);
  CHECK(psnr(v.render.color, b.reference_view->image, &v.visibility) >= 30.0);
}

TEST_CASE("blended output stays near both inputs on fixtures") {
  for (auto kind : {FixtureKind::Plane, FixtureKind::Ridge, FixtureKind::SphereCap}) {
    CAPTURE(to_string(kind));
    PipelineConfig cfg;
    cfg.view.yaw = 5.0;
    const Run r = run(make_fixture(kind, 64), cfg, true);
    REQUIRE(r.view.blended);
    const ImageBuffer& w = r.view.render.color;
    const ImageBuffer& g = *r.bundle.generated_image;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      CHECK(r.view.blended->values[i] >= std::min(w.values[i], g.values[i]) - 0.02f);
      CHECK(r.view.blended->values[i] <= std::max(w.values[i], g.values[i]) + 0.02f);
    }
  }
}

TEST_CASE("novel camera construction") {
  const SessionBundle b = make_fixture(FixtureKind::Ridge, 32);
  const PreparedScene s = prepare_scene(b, PipelineConfig{});
  const CameraParams same = novel_camera(b.original_camera, s, NovelView{});
  CHECK(same.rotation.isApprox(b.original_camera.rotation, 1e-15));
  CHECK(same.translation.isApprox(b.original_camera.translation, 1e-12));
  CHECK(same.focal == doctest::Approx(b.original_camera.focal));

  NovelView far;
  far.tz = 3.0;
  const CameraParams f = novel_camera(b.original_camera, s, far);
  CHECK(f.tz() == doctest::Approx(3.0));
  CHECK(f.focal * s.reparam.d0 == doctest::Approx(s.reparam.f0 * (s.reparam.d0 + 3.0 - s.reparam.tz0)));

  NovelView half;
  half.tz_half = true;
  CHECK(novel_camera(b.original_camera, s, half).tz() == doctest::Approx(1.0));

  // Eyes half a unit in front of the camera; pulling it 1 unit closer puts them behind.
  PreparedScene close = s;
  close.reparam.d0 = 0.5;
  NovelView behind;
  behind.tz = 1.0;
  CHECK(code_of([&] { novel_camera(b.original_camera, close, behind); }) == ErrorCode::EyesBehindCamera);

  // Orbiting keeps the centroid's camera-space depth.
  NovelView yaw;
  yaw.yaw = 30.0;
  const CameraParams y = novel_camera(b.original_camera, s, yaw);
  CHECK(y.to_camera(s.centroid).z() == doctest::Approx(b.original_camera.to_camera(s.centroid).z()));
}

TEST_CASE("pipeline: matte removes depth and timings are recorded") {
  SessionBundle b = make_fixture(FixtureKind::Plane, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 10; ++x) b.matte->at(x, y) = 0.0f;
  }
  const PreparedScene s = prepare_scene(b, PipelineConfig{});
  CHECK(s.face_pixels == 22u * 32u);
  for (const char* stage : {"smooth", "mesh", "reparam"}) {
    bool found = false;
    for (const auto& t : s.timings) found |= t.stage == stage;
    CHECK(found);
  }
  const ViewResult v = render_view(b, s, b.original_camera, PipelineConfig{}, true);
  for (int y = 0; y < 32; ++y) CHECK(v.visibility.at(3, y) == 0.0f);
  CHECK(v.timings.size() == 6);
}

TEST_CASE("pipeline: errors") {
  SessionBundle b = make_fixture(FixtureKind::Plane, 16);
  PipelineConfig cfg;
  const PreparedScene s = prepare_scene(b, cfg);
  SessionBundle no_gen = b;
  no_gen.generated_image.reset();
  try {
    render_view(no_gen, s, b.original_camera, cfg, true);
    FAIL("expected MissingGenerated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingGenerated);
    CHECK(e.member() == "generated");
  }
  CHECK_NOTHROW(render_view(no_gen, s, b.original_camera, cfg, false));

  for (auto mutate : std::initializer_list<void (*)(PipelineConfig&)>{
           [](PipelineConfig& c) { c.view.yaw = 95.0; },
           [](PipelineConfig& c) { c.cull_deg = 0.0; },
           [](PipelineConfig& c) { c.bilateral_k = 4; },
           [](PipelineConfig& c) { c.levels = 0; },
           [](PipelineConfig& c) { c.blur = 2; },
           [](PipelineConfig& c) { c.erode = -1; },
           [](PipelineConfig& c) { c.sigma_color = 0.0; },
       }) {
    PipelineConfig bad;
    mutate(bad);
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
  }
  CHECK_NOTHROW(PipelineConfig{}.validate());
  const auto j = PipelineConfig{}.to_json();
  CHECK(j.contains("cull_deg"));
  CHECK(j.contains("levels"));

  SessionBundle empty = b;
  empty.depth = DepthMap(16, 16, 0.0);
  empty.depth.valid.assign(empty.depth.valid.size(), 0);
  CHECK(code_of([&] { prepare_scene(empty, cfg); }) == ErrorCode::DegenerateDepth);
}

TEST_CASE("golden render: ridge at 5 degrees yaw") {
  PipelineConfig cfg;
  cfg.view.yaw = 5.0;
  const Run r = run(make_fixture(FixtureKind::Ridge, 32), cfg);
  FloatRaster got{32, 32, 3, r.view.render.color.values};
  const std::filesystem::path golden = std::filesystem::path(PERSVIEW_TEST_DATA) / "golden_ridge_yaw5.pfm";
  if (std::getenv("PERSVIEW_UPDATE_GOLDEN")) {
    std::filesystem::create_directories(golden.parent_path());
    write_pfm(golden, got);
  }
  REQUIRE(std::filesystem::exists(golden));
  const FloatRaster want = read_pfm(golden);
  REQUIRE(want.values.size() == got.values.size());
  for (std::size_t i = 0; i < got.values.size(); ++i) CHECK(std::abs(got.values[i] - want.values[i]) <= 1e-6f);
}

TEST_CASE("pipeline: thread count does not change the output") {
  PipelineConfig one, many;
  one.view.yaw = many.view.yaw = 12.0;
  one.threads = 1;
  many.threads = 5;
  const SessionBundle b = make_fixture(FixtureKind::SphereCap, 48);
  const Run a = run(b, one, true);
  const Run c = run(b, many, true);
  CHECK(a.view.render.color.values == c.view.render.color.values);
  CHECK(a.view.render.zbuffer == c.view.render.zbuffer);
  CHECK(a.view.blended->values == c.view.blended->values);
}
