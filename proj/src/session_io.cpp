#include "persview/session_io.hpp"

#include <cmath>

#include "persview/error.hpp"
#include "persview/image_io.hpp"

namespace persview {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void corrupt(const std::string& member, const std::string& why) {
  throw Error(ErrorCode::CorruptMember, member + ": " + why, member);
}

double number(const json& j, const std::string& member, const char* what) {
  if (!j.is_number()) corrupt(member, std::string(what) + " must be a number");
  return j.get<double>();
}

json parse_json_file(const fs::path& path, const std::string& member) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    corrupt(member, "cannot read " + path.filename().string());
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    corrupt(member, std::string("invalid JSON: ") + e.what());
  }
}

// Wraps member readers so every failure names the member.
template <typename F>
auto read_member(const std::string& member, const fs::path& path, F&& reader) {
  if (!fs::exists(path)) corrupt(member, "missing file " + path.filename().string());
  try {
    return reader(path);
  } catch (const Error& e) {
    if (e.member() == member) throw;
    throw Error(e.code() == ErrorCode::DimensionMismatch ? ErrorCode::DimensionMismatch
                                                         : ErrorCode::CorruptMember,
                member + ": " + e.what(), member);
  }
}

std::string member_file(const json& manifest, const char* key) {
  const auto it = manifest.find(key);
  if (it == manifest.end() || it->is_null()) return {};
  if (!it->is_string() || it->get<std::string>().empty()) {
    throw Error(ErrorCode::CorruptMember, std::string("manifest: '") + key + "' must be a file name",
                key);
  }
  return it->get<std::string>();
}

std::optional<LandmarkSet> landmarks_from_points(std::vector<Eigen::Vector3d> points) {
  try {
    return LandmarkSet::from_normalized(points);
  } catch (const Error&) {
    if (points.size() != kLandmarkCount) throw;
    return normalize_landmarks(points);
  }
}

}  // namespace

json camera_to_json(const CameraParams& cam) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({cam.rotation(r, 0), cam.rotation(r, 1), cam.rotation(r, 2)});
  }
  return json{{"rotation", rot},
              {"translation", {cam.translation.x(), cam.translation.y(), cam.translation.z()}},
              {"focal", cam.focal},
              {"principal_point", {cam.principal_point.x(), cam.principal_point.y()}},
              {"resolution", {cam.width, cam.height}}};
}

CameraParams camera_from_json(const json& j) {
  const std::string m = "camera";
  if (!j.is_object()) corrupt(m, "expected an object");
  for (const char* key : {"rotation", "translation", "focal", "principal_point", "resolution"}) {
    if (!j.contains(key)) corrupt(m, std::string("missing field '") + key + "'");
  }
  CameraParams cam;
  const json& rot = j["rotation"];
  if (!rot.is_array() || rot.size() != 3) corrupt(m, "rotation must be 3x3");
  for (int r = 0; r < 3; ++r) {
    if (!rot[r].is_array() || rot[r].size() != 3) corrupt(m, "rotation must be 3x3");
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = number(rot[r][c], m, "rotation entry");
  }
  const json& t = j["translation"];
  if (!t.is_array() || t.size() != 3) corrupt(m, "translation must have 3 entries");
  for (int i = 0; i < 3; ++i) cam.translation[i] = number(t[i], m, "translation entry");
  cam.focal = number(j["focal"], m, "focal");
  const json& pp = j["principal_point"];
  if (!pp.is_array() || pp.size() != 2) corrupt(m, "principal_point must have 2 entries");
  for (int i = 0; i < 2; ++i) cam.principal_point[i] = number(pp[i], m, "principal_point entry");
  const json& res = j["resolution"];
  if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer()) {
    corrupt(m, "resolution must be two integers");
  }
  cam.width = res[0].get<int>();
  cam.height = res[1].get<int>();
  return cam;
}

json points_to_json(const std::vector<Eigen::Vector3d>& points) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back({p.x(), p.y(), p.z()});
  return json{{"points", arr}};
}

std::vector<Eigen::Vector3d> points_from_json(const json& j, const std::string& member) {
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array()) {
    corrupt(member, "expected {\"points\": [[x,y,z], ...]}");
  }
  std::vector<Eigen::Vector3d> pts;
  for (const json& p : j["points"]) {
    if (!p.is_array() || p.size() != 3) corrupt(member, "each point needs 3 coordinates");
    pts.emplace_back(number(p[0], member, "coordinate"), number(p[1], member, "coordinate"),
                     number(p[2], member, "coordinate"));
  }
  return pts;
}

json reparam_to_json(const ReparamContext& ctx) {
  return json{{"d0", ctx.d0}, {"f0", ctx.f0}, {"tz0", ctx.tz0}};
}

ReparamContext reparam_from_json(const json& j) {
  const std::string m = "reparam";
  if (!j.is_object() || !j.contains("d0") || !j.contains("f0") || !j.contains("tz0")) {
    corrupt(m, "expected {\"d0\", \"f0\", \"tz0\"}");
  }
  ReparamContext ctx{number(j["d0"], m, "d0"), number(j["f0"], m, "f0"), number(j["tz0"], m, "tz0")};
  try {
    validate(ctx);
  } catch (const Error& e) {
    corrupt(m, e.what());
  }
  return ctx;
}

void validate(const SessionBundle& b) {
  const int w = b.source_image.width;
  const int h = b.source_image.height;
  if (w <= 0 || h <= 0) corrupt("source", "empty image");
  auto mismatch = [](const std::string& member, const std::string& what) {
    throw Error(ErrorCode::DimensionMismatch, member + ": " + what, member);
  };
  if (b.depth.width != w || b.depth.height != h) mismatch("depth", "size differs from source");
  if (b.matte && (b.matte->width != w || b.matte->height != h)) mismatch("matte", "size differs from source");
  if (b.generated_image && !b.generated_image->same_size(w, h)) {
    mismatch("generated", "size differs from source");
  }
  try {
    validate(b.original_camera);
  } catch (const Error& e) {
    corrupt("camera", e.what());
  }
  if (b.original_camera.width != w || b.original_camera.height != h) {
    mismatch("camera", "resolution differs from source");
  }
  if (b.landmarks && b.landmarks->size() != kLandmarkCount) corrupt("landmarks", "wrong landmark count");
  if (b.reference_geometry && b.landmarks && b.reference_geometry->size() != b.landmarks->size()) {
    mismatch("reference_geometry", "point count differs from landmarks");
  }
  if (b.reference_view) {
    try {
      validate(b.reference_view->camera);
    } catch (const Error& e) {
      corrupt("reference_view", e.what());
    }
    const auto& rv = *b.reference_view;
    if (rv.camera.width != rv.image.width || rv.camera.height != rv.image.height) {
      mismatch("reference_view", "camera resolution differs from image");
    }
  }
}

SessionBundle load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw Error(ErrorCode::MissingManifest, "no manifest.json in " + dir.string(), "manifest");
  }
  const json manifest = parse_json_file(manifest_path, "manifest");
  if (!manifest.is_object()) corrupt("manifest", "expected an object");
  if (!manifest.contains("version") || manifest["version"] != kManifestVersion) {
    corrupt("manifest", "unsupported version");
  }

  SessionBundle b;
  const std::string source = member_file(manifest, "source");
  const std::string depth = member_file(manifest, "depth");
  const std::string camera = member_file(manifest, "camera");
  if (source.empty()) corrupt("source", "manifest lists no source image");
  if (depth.empty()) corrupt("depth", "manifest lists no depth map");
  if (camera.empty()) corrupt("camera", "manifest lists no camera");

  b.source_image = read_member("source", dir / source, [](const fs::path& p) { return read_png_rgb(p); });
  b.depth = read_member("depth", dir / depth, [](const fs::path& p) { return read_depth_pfm(p); });
  b.original_camera = read_member("camera", dir / camera, [](const fs::path& p) {
    return camera_from_json(parse_json_file(p, "camera"));
  });
  if (const auto f = member_file(manifest, "matte"); !f.empty()) {
    b.matte = read_member("matte", dir / f, [](const fs::path& p) { return read_png_gray(p); });
  }
  if (const auto f = member_file(manifest, "generated"); !f.empty()) {
    b.generated_image = read_member("generated", dir / f, [](const fs::path& p) { return read_png_rgb(p); });
  }
  if (const auto f = member_file(manifest, "landmarks"); !f.empty()) {
    b.landmarks = read_member("landmarks", dir / f, [](const fs::path& p) {
      return landmarks_from_points(points_from_json(parse_json_file(p, "landmarks"), "landmarks"));
    });
  }
  if (const auto f = member_file(manifest, "reference_geometry"); !f.empty()) {
    b.reference_geometry = read_member("reference_geometry", dir / f, [](const fs::path& p) {
      return points_from_json(parse_json_file(p, "reference_geometry"), "reference_geometry");
    });
  }
  if (manifest.contains("reparam") && !manifest["reparam"].is_null()) {
    b.reparam = reparam_from_json(manifest["reparam"]);
  }
  if (manifest.contains("reference_view") && !manifest["reference_view"].is_null()) {
    const json& rv = manifest["reference_view"];
    if (!rv.is_object()) corrupt("reference_view", "expected an object");
    const std::string image = member_file(rv, "image");
    const std::string cam = member_file(rv, "camera");
    if (image.empty() || cam.empty()) corrupt("reference_view", "needs image and camera");
    ReferenceView view;
    view.image = read_member("reference_view", dir / image, [](const fs::path& p) { return read_png_rgb(p); });
    view.camera = read_member("reference_view", dir / cam, [](const fs::path& p) {
      return camera_from_json(parse_json_file(p, "reference_view"));
    });
    b.reference_view = std::move(view);
  }
  validate(b);
  return b;
}

void save_bundle(const fs::path& dir, const SessionBundle& b) {
  validate(b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  json manifest{{"version", kManifestVersion},
                {"source", "source.png"},
                {"depth", "depth.pfm"},
                {"camera", "camera.json"}};
  write_png(dir / "source.png", b.source_image);
  write_depth_pfm(dir / "depth.pfm", b.depth);
  write_file_atomic(dir / "camera.json", camera_to_json(b.original_camera).dump(2));
  if (b.matte) {
    manifest["matte"] = "matte.png";
    write_png(dir / "matte.png", *b.matte);
  }
  if (b.generated_image) {
    manifest["generated"] = "generated.png";
    write_png(dir / "generated.png", *b.generated_image);
  }
  if (b.landmarks) {
    manifest["landmarks"] = "landmarks.json";
    write_file_atomic(dir / "landmarks.json", points_to_json(b.landmarks->points()).dump());
  }
  if (b.reference_geometry) {
    manifest["reference_geometry"] = "reference_geometry.json";
    write_file_atomic(dir / "reference_geometry.json", points_to_json(*b.reference_geometry).dump());
  }
  if (b.reparam) manifest["reparam"] = reparam_to_json(*b.reparam);
  if (b.reference_view) {
    manifest["reference_view"] = {{"image", "reference_view.png"}, {"camera", "reference_camera.json"}};
    write_png(dir / "reference_view.png", b.reference_view->image);
    write_file_atomic(dir / "reference_camera.json", camera_to_json(b.reference_view->camera).dump(2));
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2));
}

void save_outputs(const fs::path& dir, const RenderOutput& render, const ImageBuffer& blend,
                  const BlendMask& mask) {
  if (!blend.same_size(render.width, render.height) || mask.width != render.width ||
      mask.height != render.height) {
    throw Error(ErrorCode::DimensionMismatch, "outputs differ in size");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::IoFailure, "cannot create output directory " + dir.string());
  }
  write_png(dir / "warped.png", render.color);
  write_png(dir / "blended.png", blend);
  write_png(dir / "mask.png", mask);
  FloatRaster z;
  z.width = render.width;
  z.height = render.height;
  z.values.resize(render.zbuffer.size());
  for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = static_cast<float>(render.zbuffer[i]);
  write_pfm(dir / "zbuffer.pfm", z);
}

}  // namespace persview
