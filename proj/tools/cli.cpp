#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "persview/error.hpp"
#include "persview/fixtures.hpp"
#include "persview/image_io.hpp"
#include "persview/metrics.hpp"
#include "persview/pipeline.hpp"
#include "persview/render_service.hpp"
#include "persview/session_io.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include "httplib.h"

namespace persview::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoFailure:
    case ErrorCode::DivergedFit:
    case ErrorCode::EmptyMesh:
    case ErrorCode::NonPositiveDepth:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

struct ViewFlags {
  double tz = 0.0;
  CLI::Option* tz_opt = nullptr;
};

void add_view_flags(CLI::App& app, PipelineConfig& cfg, ViewFlags& vf) {
  app.add_option("--yaw", cfg.view.yaw, "Novel yaw about the mesh centroid, degrees");
  app.add_option("--pitch", cfg.view.pitch, "Novel pitch, degrees");
  app.add_option("--roll", cfg.view.roll, "Novel roll, degrees");
  vf.tz_opt = app.add_option("--tz", vf.tz, "Novel camera distance t_z");
  app.add_flag("--tz-half", cfg.view.tz_half, "Halve the original t_z")->excludes(vf.tz_opt);
}

void add_mesh_flags(CLI::App& app, PipelineConfig& cfg) {
  app.add_option("--cull-deg", cfg.cull_deg, "Grazing-face culling threshold, degrees");
  app.add_option("--bilateral-k", cfg.bilateral_k, "Bilateral kernel size (odd)");
  app.add_option("--sigma-color", cfg.sigma_color, "Bilateral range sigma (relative depth)");
  app.add_option("--sigma-space", cfg.sigma_space, "Bilateral spatial sigma, pixels");
}

void add_blend_flags(CLI::App& app, PipelineConfig& cfg) {
  app.add_option("--levels", cfg.levels, "Laplacian pyramid levels");
  app.add_option("--erode", cfg.erode, "Mask erosion radius, pixels");
  app.add_option("--blur", cfg.blur, "Mask box-blur size (odd)");
}

void add_fit_flags(CLI::App& app, PipelineConfig& cfg) {
  app.add_option("--lr", cfg.fit.learning_rate, "Fit learning rate");
  app.add_option("--max-iters", cfg.fit.max_iters, "Fit iteration cap");
  app.add_option("--alternation-period", cfg.fit.alternation_period, "Iterations per rotation/translation block");
  app.add_option("--tol", cfg.fit.convergence_tol, "Relative loss plateau tolerance");
}

void finish_view_flags(PipelineConfig& cfg, const ViewFlags& vf) {
  if (vf.tz_opt && vf.tz_opt->count() > 0) cfg.view.tz = vf.tz;
}

void print_timings(std::ostream& out, const std::vector<StageTiming>& timings) {
  out << "stage timings (ms):\n";
  for (const auto& t : timings) {
    out << "  " << std::left << std::setw(12) << t.stage << std::right << std::fixed << std::setprecision(3)
        << t.millis << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create output directory " + dir.string() + ": " + ec.message());
}

void require_out(const fs::path& out, bool dry_run) {
  if (out.empty() && !dry_run) throw Error(ErrorCode::InvalidArgument, "--out is required", "out");
}

// Shared by correct and warp.
struct RenderedView {
  SessionBundle bundle;
  PreparedScene scene;
  ViewResult view;
};

std::optional<RenderedView> run_view(const fs::path& bundle_dir, const PipelineConfig& cfg, bool blend,
                                     std::ostream& out) {
  cfg.validate();
  RenderedView r;
  r.bundle = load_bundle(bundle_dir);
  if (blend && !r.bundle.generated_image) {
    throw Error(ErrorCode::MissingGenerated, "blending requested but the bundle has no generated image",
                "generated");
  }
  if (cfg.dry_run) {
    out << "dry run: bundle and configuration are valid\n";
    return std::nullopt;
  }
  r.scene = prepare_scene(r.bundle, cfg);
  const CameraParams novel = novel_camera(r.bundle.original_camera, r.scene, cfg.view);
  r.view = render_view(r.bundle, r.scene, novel, cfg, blend);
  return r;
}

void report_view(std::ostream& out, const RenderedView& r) {
  out << "visible fraction: " << std::fixed << std::setprecision(4) << r.view.visible_fraction << "\n";
  out.unsetf(std::ios::floatfield);
  std::vector<StageTiming> all = r.scene.timings;
  all.insert(all.end(), r.view.timings.begin(), r.view.timings.end());
  print_timings(out, all);
}

json view_json(const RenderedView& r) {
  return json{{"camera", camera_to_json(r.view.camera)},
              {"visible_fraction", r.view.visible_fraction},
              {"culled_faces", std::count(r.view.mesh.face_culled.begin(), r.view.mesh.face_culled.end(), 1)}};
}

int cmd_correct(const fs::path& bundle_dir, PipelineConfig cfg, std::ostream& out) {
  require_out(cfg.out_dir, cfg.dry_run);
  auto r = run_view(bundle_dir, cfg, true, out);
  if (!r) return kExitOk;
  ensure_dir(cfg.out_dir);
  save_outputs(cfg.out_dir, r->view.render, *r->view.blended, r->view.composition);
  write_json(cfg.out_dir / "view.json", view_json(*r));
  write_json(cfg.out_dir / "effective-config.json", cfg.to_json());
  report_view(out, *r);
  return kExitOk;
}

int cmd_warp(const fs::path& bundle_dir, PipelineConfig cfg, std::ostream& out) {
  require_out(cfg.out_dir, cfg.dry_run);
  auto r = run_view(bundle_dir, cfg, false, out);
  if (!r) return kExitOk;
  ensure_dir(cfg.out_dir);
  write_png(cfg.out_dir / "warped.png", r->view.render.color);
  write_png(cfg.out_dir / "visibility.png", r->view.visibility);
  write_png(cfg.out_dir / "mask.png", r->view.composition);
  FloatRaster z{r->view.render.width, r->view.render.height, 1, {}};
  z.values.reserve(r->view.render.zbuffer.size());
  for (double v : r->view.render.zbuffer) z.values.push_back(static_cast<float>(v));
  write_pfm(cfg.out_dir / "zbuffer.pfm", z);
  write_depth_pfm(cfg.out_dir / "smoothed_depth.pfm", r->scene.smoothed);
  write_obj(r->view.mesh, cfg.out_dir / "mesh.obj");
  write_json(cfg.out_dir / "view.json", view_json(*r));
  write_json(cfg.out_dir / "effective-config.json", cfg.to_json());
  report_view(out, *r);
  return kExitOk;
}

struct BlendArgs {
  fs::path warped, generated, mask;
};

int cmd_blend(const BlendArgs& a, PipelineConfig cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg.out_dir, cfg.dry_run);
  const ImageBuffer warped = read_png_rgb(a.warped);
  const ImageBuffer generated = read_png_rgb(a.generated);
  const GrayImage mask_img = read_png_gray(a.mask);
  BlendMask mask(mask_img.width, mask_img.height);
  mask.weights = mask_img.values;
  if (cfg.dry_run) {
    if (!warped.same_size(generated.width, generated.height) || !warped.same_size(mask.width, mask.height)) {
      throw Error(ErrorCode::DimensionMismatch, "warped, generated and mask sizes differ", "generated");
    }
    out << "dry run: inputs are valid\n";
    return kExitOk;
  }
  const auto start = std::chrono::steady_clock::now();
  const ImageBuffer blended = laplacian_blend(warped, generated, mask, cfg.levels);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ensure_dir(cfg.out_dir);
  write_png(cfg.out_dir / "blended.png", blended);
  write_json(cfg.out_dir / "effective-config.json", cfg.to_json());
  print_timings(out, {{"blend", ms}});
  return kExitOk;
}

int cmd_fit_camera(const fs::path& bundle_dir, PipelineConfig cfg, std::ostream& out) {
  cfg.validate();
  require_out(cfg.out_dir, cfg.dry_run);
  const SessionBundle bundle = load_bundle(bundle_dir);
  if (!bundle.landmarks) throw Error(ErrorCode::CorruptMember, "bundle has no landmarks", "landmarks");
  if (!bundle.reference_geometry) {
    throw Error(ErrorCode::CorruptMember, "bundle has no reference geometry", "reference_geometry");
  }
  if (cfg.dry_run) {
    out << "dry run: bundle and configuration are valid\n";
    return kExitOk;
  }
  const PreparedScene scene = prepare_scene(bundle, cfg);
  // The requested view is the initial guess.
  const CameraParams init =
      with_reparam_focal(novel_camera(bundle.original_camera, scene, cfg.view), scene.reparam);
  const auto start = std::chrono::steady_clock::now();
  const FitResult fit = fit_camera(*bundle.reference_geometry, *bundle.landmarks, init, scene.reparam, cfg.fit);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  ensure_dir(cfg.out_dir);
  write_json(cfg.out_dir / "fit.json", json{{"camera", camera_to_json(fit.camera)},
                                            {"initial_camera", camera_to_json(init)},
                                            {"reparam", reparam_to_json(scene.reparam)},
                                            {"loss_trace", fit.loss_trace},
                                            {"tz_trace", fit.tz_trace},
                                            {"focal_trace", fit.focal_trace},
                                            {"iterations", fit.iterations_run},
                                            {"converged", fit.converged}});
  write_json(cfg.out_dir / "effective-config.json", cfg.to_json());
  out << "iterations: " << fit.iterations_run << (fit.converged ? " (converged)" : " (iteration cap)") << "\n";
  if (!fit.loss_trace.empty()) {
    out << "loss: " << fit.loss_trace.front() << " -> " << fit.loss_trace.back() << "\n";
  }
  out << "rotation change: " << rotation_angle_between(init.rotation, fit.camera.rotation) * 180.0 / std::numbers::pi
      << " deg, t_z " << init.tz() << " -> " << fit.camera.tz() << "\n";
  print_timings(out, {{"fit", ms}});
  return kExitOk;
}

int cmd_make_fixture(const std::string& kind_name, int size, double reference_yaw, const fs::path& out_dir,
                     bool dry_run, std::ostream& out) {
  const FixtureKind kind = parse_fixture_kind(kind_name);
  if (size < FixtureScene::kMinSize) {
    throw Error(ErrorCode::InvalidArgument, "--size must be at least " + std::to_string(FixtureScene::kMinSize),
                "size");
  }
  require_out(out_dir, dry_run);
  if (dry_run) {
    out << "dry run: fixture parameters are valid\n";
    return kExitOk;
  }
  const SessionBundle bundle = make_fixture(kind, size, FixtureOptions{reference_yaw});
  save_bundle(out_dir, bundle);
  out << "wrote " << to_string(kind) << " fixture " << size << "x" << size << " to " << out_dir.string() << "\n";
  return kExitOk;
}

std::map<std::string, json> read_sidecar(const fs::path& path, const std::string& member) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptMember, member + " sidecar is not valid JSON: " + e.what(), member);
  }
  if (!j.is_object()) throw Error(ErrorCode::CorruptMember, member + " sidecar must map names to values", member);
  return j.get<std::map<std::string, json>>();
}

FeatureVector to_features(const json& j, const std::string& member) {
  if (!j.is_array()) throw Error(ErrorCode::CorruptMember, "feature entries must be arrays", member);
  FeatureVector f;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorCode::CorruptMember, "feature entries must be numeric", member);
    f.push_back(v.get<double>());
  }
  return f;
}

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

struct EvalArgs {
  fs::path pairs_dir;
  fs::path lpips;
  fs::path features_out;
  fs::path features_ref;
  std::string method = "ours";
};

int cmd_eval(const EvalArgs& a, const fs::path& out_dir, bool dry_run, std::ostream& out) {
  require_out(out_dir, dry_run);
  const fs::path outputs = a.pairs_dir / "output";
  const fs::path references = a.pairs_dir / "reference";
  std::set<std::string> names;
  if (fs::is_directory(outputs)) {
    for (const auto& e : fs::directory_iterator(outputs)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    }
  }
  if (names.empty()) throw Error(ErrorCode::EmptyReport, "no output images under " + outputs.string(), "output");
  if (a.features_out.empty() != a.features_ref.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--features-out and --features-ref go together", "features");
  }
  const auto lpips = a.lpips.empty() ? std::map<std::string, json>{} : read_sidecar(a.lpips, "lpips");
  const auto feat_out =
      a.features_out.empty() ? std::map<std::string, json>{} : read_sidecar(a.features_out, "features");
  const auto feat_ref =
      a.features_ref.empty() ? std::map<std::string, json>{} : read_sidecar(a.features_ref, "features");
  for (const auto& n : names) {
    if (!fs::exists(references / n)) {
      throw Error(ErrorCode::CorruptMember, "no reference image for " + n, "reference");
    }
  }
  if (dry_run) {
    out << "dry run: " << names.size() << " pairs found\n";
    return kExitOk;
  }

  std::vector<MetricRow> rows;
  for (const auto& n : names) {
    const ImageBuffer o = read_png_rgb(outputs / n);
    const ImageBuffer r = read_png_rgb(references / n);
    MetricRow row;
    row.name = fs::path(n).stem().string();
    row.psnr_db = psnr(o, r);
    row.ssim = ssim(o, r);
    for (const auto& key : {n, row.name}) {
      if (auto it = lpips.find(key); it != lpips.end() && !row.lpips) {
        if (!it->second.is_number()) throw Error(ErrorCode::CorruptMember, "lpips values must be numbers", "lpips");
        row.lpips = it->second.get<double>();
      }
      auto fo = feat_out.find(key);
      auto fr = feat_ref.find(key);
      if (fo != feat_out.end() && fr != feat_ref.end() && !row.id_score) {
        row.id_score = id_score(to_features(fo->second, "features"), to_features(fr->second, "features"));
      }
    }
    rows.push_back(std::move(row));
  }
  const MetricReport report = aggregate_report(std::move(rows));

  json per_image = json::array();
  for (const auto& row : report.per_image) {
    per_image.push_back({{"name", row.name},
                         {"psnr_db", number_or_inf(row.psnr_db)},
                         {"ssim", row.ssim},
                         {"lpips", row.lpips ? json(*row.lpips) : json(nullptr)},
                         {"id_score", row.id_score ? json(*row.id_score) : json(nullptr)}});
  }
  const auto& ag = report.aggregate;
  const json j{{"method", a.method},
               {"per_image", per_image},
               {"aggregate",
                {{"psnr_db", number_or_inf(ag.psnr_db)},
                 {"ssim", ag.ssim},
                 {"lpips", ag.lpips ? json(*ag.lpips) : json(nullptr)},
                 {"id_score", ag.id_score ? json(*ag.id_score) : json(nullptr)},
                 {"lpips_count", ag.lpips_count},
                 {"id_count", ag.id_count}}}};
  const std::string table = format_report_table(report, a.method);
  ensure_dir(out_dir);
  write_json(out_dir / "report.json", j);
  write_file_atomic(out_dir / "report.txt", table);
  out << table;
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_sessions = 16;
  std::string cors_origin = "*";
  fs::path preload;
};

int cmd_serve(const ServeArgs& a, PipelineConfig cfg, std::ostream& out) {
  cfg.validate();
  if (a.port < 0 || a.port > 65535) throw Error(ErrorCode::InvalidArgument, "--port out of range", "port");
  if (a.max_sessions == 0) throw Error(ErrorCode::InvalidArgument, "--max-sessions must be positive", "max-sessions");
  RenderService service(ServiceOptions{a.max_sessions, a.cors_origin, cfg});
  if (!a.preload.empty()) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(a.preload)) {
      if (e.is_regular_file()) files[e.path().filename().string()] = read_file(e.path());
    }
    const HttpReply reply = service.create_session(files);
    if (reply.status != 201) {
      const json j = json::parse(reply.body);
      throw Error(ErrorCode::CorruptMember, j["error"]["message"].get<std::string>(),
                  j["error"]["member"].is_string() ? j["error"]["member"].get<std::string>() : "");
    }
    out << "preloaded session " << json::parse(reply.body)["id"].get<std::string>() << "\n";
  }
  if (cfg.dry_run) {
    out << "dry run: server configuration is valid\n";
    return kExitOk;
  }
  httplib::Server server;
  service.mount(server);
  const int port = a.port == 0 ? server.bind_to_any_port(a.host) : (server.bind_to_port(a.host, a.port) ? a.port : -1);
  if (port < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + a.host + ":" + std::to_string(a.port));
  out << "listening on http://" << a.host << ":" << port << std::endl;
  if (!server.listen_after_bind()) throw Error(ErrorCode::IoFailure, "server stopped unexpectedly");
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Perspective correction for close-range portraits", "persview"};
  app.require_subcommand(1);

  PipelineConfig cfg;
  ViewFlags vf;
  std::string out_dir;
  fs::path bundle_dir;

  auto common = [&](CLI::App& sub, bool needs_bundle) {
    if (needs_bundle) sub.add_option("bundle", bundle_dir, "Session bundle directory")->required();
    sub.add_option("--out", out_dir, "Output directory");
    sub.add_flag("--dry-run", cfg.dry_run, "Validate inputs and flags without writing");
  };

  auto* correct = app.add_subcommand("correct", "End-to-end correction: warp, mask and blend");
  common(*correct, true);
  add_view_flags(*correct, cfg, vf);
  add_mesh_flags(*correct, cfg);
  add_blend_flags(*correct, cfg);

  auto* warp = app.add_subcommand("warp", "Render the mesh from a novel camera and export intermediates");
  common(*warp, true);
  add_view_flags(*warp, cfg, vf);
  add_mesh_flags(*warp, cfg);
  add_blend_flags(*warp, cfg);

  BlendArgs blend_args;
  auto* blend = app.add_subcommand("blend", "Laplacian-blend a warped and a generated image under a mask");
  common(*blend, false);
  blend->add_option("--warped", blend_args.warped, "Warped image (PNG)")->required();
  blend->add_option("--generated", blend_args.generated, "Generated image (PNG)")->required();
  blend->add_option("--mask", blend_args.mask, "Blend mask (grayscale PNG)")->required();
  add_blend_flags(*blend, cfg);

  auto* fit = app.add_subcommand("fit-camera", "Fit the novel camera to the bundle landmarks");
  common(*fit, true);
  add_view_flags(*fit, cfg, vf);
  add_mesh_flags(*fit, cfg);
  add_fit_flags(*fit, cfg);

  std::string kind;
  int size = 64;
  double reference_yaw = FixtureOptions{}.reference_yaw_deg;
  auto* fixture = app.add_subcommand("make-fixture", "Write a synthetic session bundle");
  common(*fixture, false);
  fixture->add_option("kind", kind, "plane | ridge | sphere-cap")->required();
  fixture->add_option("--size", size, "Square resolution in pixels");
  fixture->add_option("--reference-yaw", reference_yaw, "Yaw of the ground-truth second view, degrees");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score output/reference image pairs");
  common(*eval, false);
  eval->add_option("pairs_dir", eval_args.pairs_dir, "Directory with output/ and reference/ subdirectories")
      ->required();
  eval->add_option("--lpips", eval_args.lpips, "JSON sidecar mapping image names to LPIPS values");
  eval->add_option("--features-out", eval_args.features_out, "JSON sidecar of identity features for outputs");
  eval->add_option("--features-ref", eval_args.features_ref, "JSON sidecar of identity features for references");
  eval->add_option("--method", eval_args.method, "Method name for the report table");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP render service");
  serve->add_option("--host", serve_args.host, "Bind address");
  serve->add_option("--port", serve_args.port, "Port (0 picks a free one)");
  serve->add_option("--max-sessions", serve_args.max_sessions, "Resident session cap (LRU)");
  serve->add_option("--cors-origin", serve_args.cors_origin, "Allowed CORS origin");
  serve->add_option("--preload", serve_args.preload, "Bundle directory to load at startup");
  serve->add_flag("--dry-run", cfg.dry_run, "Validate flags without listening");
  add_mesh_flags(*serve, cfg);
  add_blend_flags(*serve, cfg);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  finish_view_flags(cfg, vf);
  cfg.out_dir = out_dir;

  try {
    if (correct->parsed()) return cmd_correct(bundle_dir, cfg, out);
    if (warp->parsed()) return cmd_warp(bundle_dir, cfg, out);
    if (blend->parsed()) return cmd_blend(blend_args, cfg, out);
    if (fit->parsed()) return cmd_fit_camera(bundle_dir, cfg, out);
    if (fixture->parsed()) return cmd_make_fixture(kind, size, reference_yaw, out_dir, cfg.dry_run, out);
    if (eval->parsed()) return cmd_eval(eval_args, out_dir, cfg.dry_run, out);
    if (serve->parsed()) return cmd_serve(serve_args, cfg, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code());
    if (!e.member().empty()) err << " [" << e.member() << "]";
    err << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace persview::cli
