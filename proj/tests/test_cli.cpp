#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "persview/image_io.hpp"
#include "persview/session_io.hpp"

using namespace persview;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_entries(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
  return n;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

// Shared fixture bundle, written once.
const fs::path& fixture_dir() {
  static oracle::ScratchDir dir;
  static const bool made = [] {
    const Result r = run({"make-fixture", "sphere-cap", "--size", "32", "--out", (dir / "bundle").string()});
    REQUIRE(r.code == cli::kExitOk);
    return true;
  }();
  (void)made;
  static const fs::path bundle = dir / "bundle";
  return bundle;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({}).code == cli::kExitValidation);
  CHECK(run({"frobnicate"}).code == cli::kExitValidation);
  CHECK(run({"correct"}).code == cli::kExitValidation);
  CHECK(run({"correct", fixture_dir().string(), "--yaw", "abc", "--out", "x"}).code == cli::kExitValidation);
  CHECK(run({"warp", fixture_dir().string(), "--tz", "1", "--tz-half", "--out", "x"}).code == cli::kExitValidation);
}

TEST_CASE("make-fixture writes a loadable bundle") {
  oracle::ScratchDir dir;
  for (const char* kind : {"plane", "ridge", "sphere-cap"}) {
    const Result r = run({"make-fixture", kind, "--size", "16", "--out", (dir / kind).string()});
    CHECK(r.code == cli::kExitOk);
    CHECK_NOTHROW(load_bundle(dir / kind));
  }
  const Result small = run({"make-fixture", "plane", "--size", "8", "--out", (dir / "small").string()});
  CHECK(small.code == cli::kExitValidation);
  CHECK(small.err.find("[size]") != std::string::npos);
  CHECK(run({"make-fixture", "cube", "--out", (dir / "cube").string()}).code == cli::kExitValidation);
}

TEST_CASE("correct writes outputs and the effective configuration") {
  oracle::ScratchDir dir;
  const Result r = run({"correct", fixture_dir().string(), "--yaw", "5", "--levels", "2", "--out", (dir / "o").string()});
  REQUIRE(r.code == cli::kExitOk);
  for (const char* name : {"warped.png", "blended.png", "mask.png", "zbuffer.pfm", "view.json", "effective-config.json"}) {
    CHECK(fs::exists(dir / "o" / name));
  }
  const auto cfg = read_json(dir / "o" / "effective-config.json");
  CHECK(cfg["levels"] == 2);
  CHECK(cfg["yaw"] == 5.0);
  CHECK(r.out.find("visible fraction") != std::string::npos);
  CHECK(read_png_rgb(dir / "o" / "blended.png").same_size(32, 32));
}

TEST_CASE("outputs are byte-identical across runs") {
  oracle::ScratchDir dir;
  for (const char* sub : {"a", "b"}) {
    REQUIRE(run({"correct", fixture_dir().string(), "--yaw", "7", "--pitch", "-3", "--out", (dir / sub).string()}).code ==
            cli::kExitOk);
  }
  for (const char* name : {"warped.png", "blended.png", "mask.png", "zbuffer.pfm"}) {
    CHECK(read_file(dir / "a" / name) == read_file(dir / "b" / name));
  }
}

TEST_CASE("dry run validates without writing") {
  oracle::ScratchDir dir;
  const fs::path out = dir / "o";
  CHECK(run({"correct", fixture_dir().string(), "--dry-run", "--out", out.string()}).code == cli::kExitOk);
  CHECK(run({"warp", fixture_dir().string(), "--dry-run"}).code == cli::kExitOk);
  CHECK(run({"fit-camera", fixture_dir().string(), "--dry-run", "--out", out.string()}).code == cli::kExitOk);
  CHECK(run({"make-fixture", "plane", "--dry-run", "--out", out.string()}).code == cli::kExitOk);
  CHECK_FALSE(fs::exists(out));
  // Dry runs still validate.
  CHECK(run({"correct", fixture_dir().string(), "--dry-run", "--yaw", "95"}).code == cli::kExitValidation);
  CHECK(run({"correct", (dir / "none").string(), "--dry-run"}).code == cli::kExitValidation);
}

TEST_CASE("exit codes for validation and runtime failures") {
  oracle::ScratchDir dir;
  const Result yaw = run({"correct", fixture_dir().string(), "--yaw", "95", "--out", (dir / "o").string()});
  CHECK(yaw.code == cli::kExitValidation);
  CHECK(yaw.err.find("InvalidArgument [yaw]") != std::string::npos);

  const Result kernel = run({"warp", fixture_dir().string(), "--bilateral-k", "4", "--out", (dir / "o").string()});
  CHECK(kernel.code == cli::kExitValidation);

  const Result missing_out = run({"correct", fixture_dir().string()});
  CHECK(missing_out.code == cli::kExitValidation);
  CHECK(missing_out.err.find("[out]") != std::string::npos);

  // An output path under a regular file cannot be created.
  std::ofstream(dir / "file") << "x";
  const Result io = run({"correct", fixture_dir().string(), "--out", (dir / "file" / "o").string()});
  CHECK(io.code == cli::kExitRuntime);
  CHECK(io.err.find("IoFailure") != std::string::npos);

  // No generated image: correct refuses and names the member; warp is fine.
  SessionBundle b = load_bundle(fixture_dir());
  b.generated_image.reset();
  save_bundle(dir / "nogen", b);
  const Result nogen = run({"correct", (dir / "nogen").string(), "--out", (dir / "o2").string()});
  CHECK(nogen.code == cli::kExitValidation);
  CHECK(nogen.err.find("MissingGenerated [generated]") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o2"));
  CHECK(run({"warp", (dir / "nogen").string(), "--out", (dir / "o3").string()}).code == cli::kExitOk);

  const Result corrupt = [&] {
    fs::copy(fixture_dir(), dir / "bad");
    std::ofstream(dir / "bad" / "depth.pfm") << "junk";
    return run({"warp", (dir / "bad").string(), "--out", (dir / "o4").string()});
  }();
  CHECK(corrupt.code == cli::kExitValidation);
  CHECK(corrupt.err.find("CorruptMember [depth]") != std::string::npos);
}

TEST_CASE("warp exports intermediates") {
  oracle::ScratchDir dir;
  REQUIRE(run({"warp", fixture_dir().string(), "--tz-half", "--out", (dir / "o").string()}).code ==
          cli::kExitOk);
  for (const char* name : {"warped.png", "visibility.png", "mask.png", "zbuffer.pfm", "smoothed_depth.pfm", "mesh.obj",
                           "view.json", "effective-config.json"}) {
    CHECK(fs::exists(dir / "o" / name));
  }
  const auto view = read_json(dir / "o" / "view.json");
  CHECK(view["camera"]["translation"][2].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("blend subcommand") {
  oracle::ScratchDir dir;
  ImageBuffer w(32, 32, 0.2f), g(32, 32, 0.8f);
  GrayImage ones(32, 32, 1.0f), zeros(32, 32, 0.0f);
  write_png(dir / "w.png", w);
  write_png(dir / "g.png", g);
  write_png(dir / "ones.png", ones);
  write_png(dir / "zeros.png", zeros);
  REQUIRE(run({"blend", "--warped", (dir / "w.png").string(), "--generated", (dir / "g.png").string(), "--mask",
               (dir / "ones.png").string(), "--out", (dir / "a").string()})
              .code == cli::kExitOk);
  CHECK(read_file(dir / "a" / "blended.png") == read_file(dir / "w.png"));
  REQUIRE(run({"blend", "--warped", (dir / "w.png").string(), "--generated", (dir / "g.png").string(), "--mask",
               (dir / "zeros.png").string(), "--out", (dir / "b").string()})
              .code == cli::kExitOk);
  CHECK(read_file(dir / "b" / "blended.png") == read_file(dir / "g.png"));
  write_png(dir / "small.png", GrayImage(16, 16, 1.0f));
  CHECK(run({"blend", "--warped", (dir / "w.png").string(), "--generated", (dir / "g.png").string(), "--mask",
             (dir / "small.png").string(), "--out", (dir / "c").string()})
            .code == cli::kExitValidation);
}

TEST_CASE("fit-camera writes a trace") {
  oracle::ScratchDir dir;
  const Result r = run({"fit-camera", fixture_dir().string(), "--yaw", "3", "--tz", "2.1", "--max-iters", "50",
                        "--out", (dir / "o").string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto fit = read_json(dir / "o" / "fit.json");
  CHECK(fit["loss_trace"].size() == fit["iterations"].get<std::size_t>());
  CHECK(fit["iterations"].get<int>() <= 50);
  CHECK(fit["loss_trace"].back().get<double>() <= fit["loss_trace"].front().get<double>());
  CHECK(fit.contains("camera"));
  CHECK(fit.contains("initial_camera"));
  CHECK(fit.contains("reparam"));
  CHECK(fit["tz_trace"].size() == fit["focal_trace"].size());

  SessionBundle b = load_bundle(fixture_dir());
  b.landmarks.reset();
  save_bundle(dir / "nolm", b);
  const Result none = run({"fit-camera", (dir / "nolm").string(), "--out", (dir / "o2").string()});
  CHECK(none.code == cli::kExitValidation);
  CHECK(none.err.find("[landmarks]") != std::string::npos);
}

TEST_CASE("eval: report rows and hand-computed aggregates") {
  oracle::ScratchDir dir;
  fs::create_directories(dir / "pairs" / "output");
  fs::create_directories(dir / "pairs" / "reference");
  // Code values keep the offsets exact after 8-bit quantisation.
  ImageBuffer ref(16, 16, 100.0f / 255.0f);
  ImageBuffer off(16, 16, 151.0f / 255.0f);  // 51/255 = 0.2 -> PSNR 10 log10(25) = 13.9794 dB
  write_png(dir / "pairs" / "reference" / "same.png", ref);
  write_png(dir / "pairs" / "output" / "same.png", ref);
  write_png(dir / "pairs" / "reference" / "off.png", ref);
  write_png(dir / "pairs" / "output" / "off.png", off);
  std::ofstream(dir / "lpips.json") << R"({"same.png": 0.0, "off": 0.5})";
  std::ofstream(dir / "fo.json") << R"({"same": [1, 0], "off": [1, 1]})";
  std::ofstream(dir / "fr.json") << R"({"same": [2, 0], "off": [1, -1]})";

  const Result r = run({"eval", (dir / "pairs").string(), "--lpips", (dir / "lpips.json").string(), "--features-out",
                        (dir / "fo.json").string(), "--features-ref", (dir / "fr.json").string(), "--method", "demo",
                        "--out", (dir / "rep").string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto j = read_json(dir / "rep" / "report.json");
  REQUIRE(j["per_image"].size() == 2);
  // Sorted by file name: off, same.
  CHECK(j["per_image"][0]["name"] == "off");
  CHECK(j["per_image"][0]["psnr_db"].get<double>() == doctest::Approx(10.0 * std::log10(25.0)).epsilon(1e-6));
  CHECK(j["per_image"][0]["id_score"].get<double>() == doctest::Approx(0.0));
  CHECK(j["per_image"][1]["psnr_db"] == "inf");
  CHECK(j["per_image"][1]["ssim"].get<double>() == doctest::Approx(1.0));
  CHECK(j["per_image"][1]["id_score"].get<double>() == doctest::Approx(1.0));
  CHECK(j["aggregate"]["psnr_db"] == "inf");
  CHECK(j["aggregate"]["lpips"].get<double>() == doctest::Approx(0.25));
  CHECK(j["aggregate"]["id_score"].get<double>() == doctest::Approx(0.5));
  CHECK(j["method"] == "demo");
  const std::string table = read_file(dir / "rep" / "report.txt");
  CHECK(table.rfind("Methods | PSNR↑ | SSIM↑ | LPIPS↓ | ID↑", 0) == 0);
  CHECK(table.find("demo") != std::string::npos);
  CHECK(r.out == table);

  // Finite aggregate: only the offset pair.
  fs::remove(dir / "pairs" / "output" / "same.png");
  REQUIRE(run({"eval", (dir / "pairs").string(), "--out", (dir / "rep2").string()}).code == cli::kExitOk);
  const auto k = read_json(dir / "rep2" / "report.json");
  CHECK(k["aggregate"]["psnr_db"].get<double>() == doctest::Approx(13.9794).epsilon(1e-4));
  CHECK(k["aggregate"]["lpips"].is_null());
}

TEST_CASE("eval: empty and inconsistent inputs") {
  oracle::ScratchDir dir;
  fs::create_directories(dir / "empty" / "output");
  const Result empty = run({"eval", (dir / "empty").string(), "--out", (dir / "rep").string()});
  CHECK(empty.code == cli::kExitValidation);
  CHECK(empty.err.find("EmptyReport") != std::string::npos);
  CHECK(count_entries(dir / "rep") == 0);

  fs::create_directories(dir / "p" / "output");
  write_png(dir / "p" / "output" / "x.png", ImageBuffer(16, 16));
  CHECK(run({"eval", (dir / "p").string(), "--out", (dir / "rep").string()}).code == cli::kExitValidation);
  fs::create_directories(dir / "p" / "reference");
  write_png(dir / "p" / "reference" / "x.png", ImageBuffer(16, 16));
  CHECK(run({"eval", (dir / "p").string(), "--features-out", "a.json", "--out", (dir / "rep").string()}).code ==
        cli::kExitValidation);
  std::ofstream(dir / "bad.json") << "[1, 2]";
  CHECK(run({"eval", (dir / "p").string(), "--lpips", (dir / "bad.json").string(), "--out", (dir / "rep").string()})
            .code == cli::kExitValidation);
}

TEST_CASE("serve dry run") {
  CHECK(run({"serve", "--dry-run", "--port", "0"}).code == cli::kExitOk);
  CHECK(run({"serve", "--dry-run", "--max-sessions", "0"}).code == cli::kExitValidation);
  const Result pre = run({"serve", "--dry-run", "--preload", fixture_dir().string()});
  CHECK(pre.code == cli::kExitOk);
  CHECK(pre.out.find("preloaded session") != std::string::npos);
}
