#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "persview/error.hpp"
#include "persview/fixtures.hpp"
#include "persview/image_io.hpp"
#include "persview/session_io.hpp"

using namespace persview;
namespace fs = std::filesystem;

namespace {

struct Failure {
  ErrorCode code;
  std::string member;
};

Failure failure_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return {e.code(), e.member()};
  }
  FAIL("expected an Error");
  return {ErrorCode::InvalidArgument, ""};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

void append_be_float(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((bits >> s) & 0xFF));
}

}  // namespace

TEST_CASE("pfm: hand-built big-endian file is read bottom-to-top") {
  oracle::ScratchDir dir;
  // Rows in file order: bottom row (3, 4) then top row (1, 2).
  std::string bytes = "Pf\n2 2\n1.0\n";
  for (float v : {3.0f, 4.0f, 1.0f, 2.0f}) append_be_float(bytes, v);
  write_text(dir / "be.pfm", bytes);
  const FloatRaster r = read_pfm(dir / "be.pfm");
  CHECK(r.width == 2);
  CHECK(r.height == 2);
  CHECK(r.values == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
}

TEST_CASE("pfm: written layout is little-endian, bottom row first") {
  oracle::ScratchDir dir;
  FloatRaster r{3, 2, 1, {1, 2, 3, 4, 5, 6}};
  write_pfm(dir / "le.pfm", r);
  const std::string bytes = read_file(dir / "le.pfm");
  const std::string header = "Pf\n3 2\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 6 * 4);
  CHECK(bytes.substr(0, header.size()) == header);
  float first;
  std::memcpy(&first, bytes.data() + header.size(), 4);
  if constexpr (std::endian::native == std::endian::little) CHECK(first == 4.0f);
}

TEST_CASE("pfm and png round trips") {
  oracle::ScratchDir dir;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);

  FloatRaster rgb{5, 4, 3, {}};
  for (int i = 0; i < 60; ++i) rgb.values.push_back(u(rng) * 1000.0f - 500.0f);
  write_pfm(dir / "rgb.pfm", rgb);
  const FloatRaster back = read_pfm(dir / "rgb.pfm");
  CHECK(back.channels == 3);
  CHECK(back.values == rgb.values);

  std::vector<double> d(20 * 10);
  for (double& v : d) v = static_cast<float>(0.5 + 3.0 * u(rng));
  d[7] = std::nan("");
  d[8] = -1.0;
  const DepthMap depth = DepthMap::from_values(20, 10, d);
  write_depth_pfm(dir / "depth.pfm", depth);
  const DepthMap dback = read_depth_pfm(dir / "depth.pfm");
  CHECK(dback.valid == depth.valid);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (depth.valid[i]) CHECK(dback.values[i] == depth.values[i]);
  }
  CHECK_FALSE(dback.valid[7]);
  CHECK_FALSE(dback.valid[8]);

  ImageBuffer img(13, 7);
  for (float& v : img.values) v = u(rng);
  write_png(dir / "img.png", img);
  const ImageBuffer iback = read_png_rgb(dir / "img.png");
  REQUIRE(iback.values.size() == img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i) CHECK(std::abs(iback.values[i] - img.values[i]) <= 1.0f / 255.0f);
  // Code values survive exactly.
  ImageBuffer codes(4, 4);
  for (std::size_t i = 0; i < codes.values.size(); ++i) codes.values[i] = static_cast<float>(i * 5) / 255.0f;
  write_png(dir / "codes.png", codes);
  CHECK(read_png_rgb(dir / "codes.png").values == codes.values);

  GrayImage g(6, 5);
  for (float& v : g.values) v = u(rng);
  write_png(dir / "g.png", g);
  const GrayImage gback = read_png_gray(dir / "g.png");
  for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(std::abs(gback.values[i] - g.values[i]) <= 1.0f / 255.0f);
}

TEST_CASE("bundle round trip") {
  oracle::ScratchDir dir;
  const SessionBundle b = make_fixture(FixtureKind::Ridge, 32);
  save_bundle(dir.path(), b);
  const SessionBundle r = load_bundle(dir.path());

  for (std::size_t i = 0; i < b.source_image.values.size(); ++i) {
    CHECK(std::abs(r.source_image.values[i] - b.source_image.values[i]) <= 1.0f / 255.0f);
  }
  CHECK(r.depth.valid == b.depth.valid);
  for (std::size_t i = 0; i < b.depth.values.size(); ++i) {
    if (b.depth.valid[i]) CHECK(r.depth.values[i] == static_cast<double>(static_cast<float>(b.depth.values[i])));
  }
  CHECK(r.original_camera.rotation == b.original_camera.rotation);
  CHECK(r.original_camera.translation == b.original_camera.translation);
  CHECK(r.original_camera.focal == b.original_camera.focal);
  CHECK(r.original_camera.principal_point == b.original_camera.principal_point);
  REQUIRE(r.landmarks);
  CHECK(r.landmarks->points() == b.landmarks->points());
  REQUIRE(r.reparam);
  CHECK(r.reparam->d0 == b.reparam->d0);
  CHECK(r.reparam->f0 == b.reparam->f0);
  CHECK(r.reparam->tz0 == b.reparam->tz0);
  REQUIRE(r.reference_geometry);
  CHECK(*r.reference_geometry == *b.reference_geometry);
  REQUIRE(r.reference_view);
  CHECK(r.reference_view->camera.rotation == b.reference_view->camera.rotation);
  REQUIRE(r.generated_image);
  CHECK(r.generated_image->same_size(32, 32));
  CHECK(read_json(dir / "manifest.json")["version"] == kManifestVersion);

  SUBCASE("minimal bundle") {
    oracle::ScratchDir d2;
    SessionBundle m;
    m.source_image = b.source_image;
    m.depth = b.depth;
    m.original_camera = b.original_camera;
    save_bundle(d2.path(), m);
    const SessionBundle mr = load_bundle(d2.path());
    CHECK_FALSE(mr.generated_image);
    CHECK_FALSE(mr.matte);
    CHECK_FALSE(mr.landmarks);
    CHECK_FALSE(mr.reparam);
  }
}

TEST_CASE("broken bundles name the offending member") {
  const SessionBundle good = make_fixture(FixtureKind::Plane, 16);
  oracle::ScratchDir dir;
  save_bundle(dir.path(), good);
  auto manifest = read_json(dir / "manifest.json");

  auto expect = [&](ErrorCode code, const std::string& member) {
    const Failure f = failure_of([&] { load_bundle(dir.path()); });
    CHECK(f.code == code);
    CHECK(f.member == member);
  };
  auto restore = [&] { save_bundle(dir.path(), good); };

  SUBCASE("garbage depth") {
    write_text(dir / "depth.pfm", "not a pfm at all");
    expect(ErrorCode::CorruptMember, "depth");
  }
  SUBCASE("truncated depth") {
    const std::string bytes = read_file(dir / "depth.pfm");
    write_text(dir / "depth.pfm", bytes.substr(0, bytes.size() - 10));
    expect(ErrorCode::CorruptMember, "depth");
  }
  SUBCASE("colour depth") {
    write_pfm(dir / "depth.pfm", FloatRaster{16, 16, 3, std::vector<float>(16 * 16 * 3, 1.0f)});
    expect(ErrorCode::CorruptMember, "depth");
  }
  SUBCASE("depth size mismatch") {
    write_depth_pfm(dir / "depth.pfm", DepthMap(15, 16, 2.0));
    expect(ErrorCode::DimensionMismatch, "depth");
  }
  SUBCASE("missing manifest") {
    fs::remove(dir / "manifest.json");
    expect(ErrorCode::MissingManifest, "manifest");
  }
  SUBCASE("manifest not JSON") {
    write_text(dir / "manifest.json", "{");
    expect(ErrorCode::CorruptMember, "manifest");
  }
  SUBCASE("manifest version") {
    manifest["version"] = 2;
    write_text(dir / "manifest.json", manifest.dump());
    expect(ErrorCode::CorruptMember, "manifest");
  }
  SUBCASE("camera schema") {
    auto cam = read_json(dir / "camera.json");
    cam.erase("focal");
    write_text(dir / "camera.json", cam.dump());
    expect(ErrorCode::CorruptMember, "camera");
  }
  SUBCASE("camera not a rotation") {
    auto cam = read_json(dir / "camera.json");
    cam["rotation"][0][0] = 2.0;
    write_text(dir / "camera.json", cam.dump());
    expect(ErrorCode::CorruptMember, "camera");
  }
  SUBCASE("camera resolution") {
    auto cam = read_json(dir / "camera.json");
    cam["resolution"] = {17, 16};
    write_text(dir / "camera.json", cam.dump());
    expect(ErrorCode::DimensionMismatch, "camera");
  }
  SUBCASE("generated listed but absent") {
    fs::remove(dir / "generated.png");
    expect(ErrorCode::CorruptMember, "generated");
  }
  SUBCASE("generated size mismatch") {
    write_png(dir / "generated.png", ImageBuffer(8, 8));
    expect(ErrorCode::DimensionMismatch, "generated");
  }
  SUBCASE("source not a PNG") {
    write_text(dir / "source.png", "jpeg, honest");
    expect(ErrorCode::CorruptMember, "source");
  }
  SUBCASE("landmark count") {
    auto pts = read_json(dir / "landmarks.json");
    pts["points"].erase(0);
    write_text(dir / "landmarks.json", pts.dump());
    expect(ErrorCode::DegenerateLandmarks, "landmarks");
  }
  SUBCASE("reparam") {
    manifest["reparam"]["d0"] = -1.0;
    write_text(dir / "manifest.json", manifest.dump());
    expect(ErrorCode::CorruptMember, "reparam");
  }
  SUBCASE("member path is not a string") {
    manifest["depth"] = 5;
    write_text(dir / "manifest.json", manifest.dump());
    expect(ErrorCode::CorruptMember, "depth");
  }
  restore();
  CHECK_NOTHROW(load_bundle(dir.path()));
}

TEST_CASE("atomic writes") {
  oracle::ScratchDir dir;
  write_file_atomic(dir / "a.txt", std::string("first"));
  write_file_atomic(dir / "a.txt", std::string("second"));
  CHECK(read_file(dir / "a.txt") == "second");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(dir.path())) {
    ++entries;
    CHECK(e.path().filename() == "a.txt");
  }
  CHECK(entries == 1);

  const Failure f = failure_of([&] { write_file_atomic(dir / "missing" / "a.txt", std::string("x")); });
  CHECK(f.code == ErrorCode::IoFailure);
  CHECK(failure_of([&] { read_file(dir / "nope"); }).code == ErrorCode::IoFailure);

  // A directory in the way: the rename fails and no temp file is left.
  fs::create_directory(dir / "blocked");
  fs::create_directory(dir / "blocked" / "inner");
  CHECK(failure_of([&] { write_file_atomic(dir / "blocked" / "inner", std::string("x")); }).code ==
        ErrorCode::IoFailure);
  int blocked = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "blocked")) ++blocked;
  CHECK(blocked == 1);
}

TEST_CASE("save_bundle and save_outputs report IoFailure") {
  oracle::ScratchDir dir;
  write_text(dir / "file", "x");
  const SessionBundle b = make_fixture(FixtureKind::Plane, 16);
  CHECK(failure_of([&] { save_bundle(dir / "file" / "bundle", b); }).code == ErrorCode::IoFailure);
  RenderOutput r;
  r.width = r.height = 16;
  r.color = ImageBuffer(16, 16);
  r.zbuffer.assign(256, 1.0);
  r.face_id.assign(256, 0);
  r.coverage.assign(256, 1);
  CHECK(failure_of([&] { save_outputs(dir / "file" / "out", r, ImageBuffer(16, 16), BlendMask(16, 16)); }).code ==
        ErrorCode::IoFailure);
  CHECK(failure_of([&] { save_outputs(dir / "out", r, ImageBuffer(8, 16), BlendMask(16, 16)); }).code ==
        ErrorCode::DimensionMismatch);
  save_outputs(dir / "out", r, ImageBuffer(16, 16, 0.5f), BlendMask(16, 16, 1.0f));
  for (const char* name : {"warped.png", "blended.png", "mask.png", "zbuffer.pfm"}) CHECK(fs::exists(dir / "out" / name));
}
