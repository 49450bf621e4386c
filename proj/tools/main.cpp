#include <CLI11.hpp>
#include <json.hpp>

#include "sdfrecon/dataset.hpp"
#include "sdfrecon/losses.hpp"
#include "sdfrecon/mesh.hpp"
#include "sdfrecon/metrics.hpp"
#include "sdfrecon/renderer.hpp"
#include "sdfrecon/train.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace sdfrecon;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kRuntime = 5,
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

AnalyticScene scene_from_arg(const std::string& arg) {
  if (!arg.empty() && arg[0] == '@') return AnalyticScene::from_json(slurp(arg.substr(1)));
  return AnalyticScene::preset(arg);
}

struct FitOptions {
  std::string data_dir, config_path, init_ckpt, out_ckpt, log_path;
  TrainConfig cfg;
  LossWeights weights;
  // flag presence markers so flags win over the config file
  std::vector<std::function<void(TrainConfig&, LossWeights&)>> overrides;
};

template <typename T>
int run_fit_typed(const FitOptions& opt) {
  Dataset data = load_dataset(opt.data_dir);
  FieldParams<T> params = opt.init_ckpt.empty()
                              ? FieldParams<T>::init(NetConfig{}, opt.cfg.seed)
                              : load_checkpoint<T>(opt.init_ckpt);
  std::ofstream log;
  if (!opt.log_path.empty()) {
    log.open(opt.log_path, std::ios::binary);  // '\n' endings regardless of platform
    if (!log) throw IoError("cannot open for writing: " + opt.log_path);
  }
  std::string stem = opt.out_ckpt;
  if (stem.size() > 5 && stem.substr(stem.size() - 5) == ".ckpt") stem.resize(stem.size() - 5);
  auto checkpoint_cb = [&](int iter, const FieldParams<T>& p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%06d.ckpt", iter);
    save_checkpoint(p, stem + buf);
  };
  FitResult res = fit_scene<T>(params, data, opt.cfg, opt.weights,
                               opt.log_path.empty() ? nullptr : &log, checkpoint_cb);
  save_checkpoint(params, opt.out_ckpt);
  if (res.diverged) {
    std::cerr << "fit: diverged at iteration " << res.iterations_run
              << " (total=" << res.final_total << "); last good checkpoint written to "
              << opt.out_ckpt << "\n";
    return kRuntime;
  }
  std::cout << "fit: " << res.iterations_run << " iterations, total " << res.initial_total
            << " -> " << res.final_total << ", checkpoint " << opt.out_ckpt << "\n";
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"SDF reconstruction from posed images and silhouettes"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = SDFRECON_THREADS or hardware)");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset from an analytic scene");
  std::string synth_scene = "sphere", synth_out;
  SynthConfig synth_cfg;
  bool synth_ortho = false;
  synth->add_option("--scene", synth_scene, "Scene preset name or @scene.json");
  synth->add_option("--views", synth_cfg.n_views, "Number of views");
  synth->add_option("--res", synth_cfg.resolution, "Image resolution");
  synth->add_option("--distance", synth_cfg.camera_distance, "Camera distance to origin");
  synth->add_option("--elevation", synth_cfg.elevation_deg, "Camera elevation (degrees)");
  synth->add_option("--seed", synth_cfg.seed, "Seed recorded in the manifest");
  synth->add_flag("--ortho", synth_ortho, "Orthographic cameras");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "Fit the field to a centered sphere SDF");
  double pre_radius = 0.5, pre_lr = 1e-3;
  int pre_iters = 2000, pre_points = 10000;
  uint64_t pre_seed = 0;
  bool pre_f64 = false;
  std::string pre_out;
  NetConfig pre_net;
  pre->add_option("--radius", pre_radius, "Sphere radius");
  pre->add_option("--iters", pre_iters, "Iterations");
  pre->add_option("--points", pre_points, "Points per iteration");
  pre->add_option("--lr", pre_lr, "Learning rate");
  pre->add_option("--seed", pre_seed, "Seed");
  pre->add_option("--width", pre_net.width, "Backbone width");
  pre->add_option("--levels", pre_net.pe_levels, "Positional encoding levels");
  pre->add_flag("--float64", pre_f64, "Train in double precision");
  pre->add_option("--out", pre_out, "Output checkpoint")->required();

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "Fit a field to a dataset");
  FitOptions fo;
  fit->add_option("--data", fo.data_dir, "Dataset directory")->required();
  fit->add_option("--out", fo.out_ckpt, "Output checkpoint")->required();
  fit->add_option("--config", fo.config_path, "Train config JSON");
  fit->add_option("--init", fo.init_ckpt, "Initial checkpoint (e.g. sphere pretraining)");
  fit->add_option("--log", fo.log_path, "Loss log CSV path");
  auto track = [&fo](auto setter) {
    return [&fo, setter](auto v) { fo.overrides.push_back([setter, v](TrainConfig& c, LossWeights& w) { setter(c, w, v); }); };
  };
  fit->add_option_function<int>("--iters", track([](TrainConfig& c, LossWeights&, int v) { c.iterations = v; }), "Iterations");
  fit->add_option_function<double>("--lr", track([](TrainConfig& c, LossWeights&, double v) { c.learning_rate = v; }), "Learning rate");
  fit->add_option_function<int>("--batch-views", track([](TrainConfig& c, LossWeights&, int v) { c.batch_views = v; }), "Views per iteration");
  fit->add_option_function<int>("--pixels", track([](TrainConfig& c, LossWeights&, int v) { c.pixels_per_view = v; }), "Pixels sampled per view");
  fit->add_option_function<uint64_t>("--seed", track([](TrainConfig& c, LossWeights&, uint64_t v) { c.seed = v; }), "Seed");
  fit->add_option_function<int>("--ckpt-interval", track([](TrainConfig& c, LossWeights&, int v) { c.checkpoint_interval = v; }), "Periodic checkpoint interval");
  fit->add_flag_function("--deterministic", [&fo](int64_t) { fo.overrides.push_back([](TrainConfig& c, LossWeights&) { c.deterministic = true; }); }, "Byte-stable loss log (single worker)");
  fit->add_flag_function("--float64", [&fo](int64_t) { fo.overrides.push_back([](TrainConfig& c, LossWeights&) { c.float64 = true; }); }, "Train in double precision");

  // ---- extract ----
  auto* ext = app.add_subcommand("extract", "Extract the zero isosurface mesh from a checkpoint");
  std::string ext_ckpt, ext_out;
  int ext_res = 128;
  double ext_roi = 1.0;
  ext->add_option("--ckpt", ext_ckpt, "Checkpoint")->required();
  ext->add_option("--res", ext_res, "Grid resolution per axis");
  ext->add_option("--roi", ext_roi, "Half width of the extraction cube");
  ext->add_option("--out", ext_out, "Output PLY")->required();

  // ---- render ----
  auto* ren = app.add_subcommand("render", "Render a checkpoint from a camera");
  std::string ren_ckpt, ren_cam, ren_out, ren_depth;
  RenderConfig ren_cfg;
  ren->add_option("--ckpt", ren_ckpt, "Checkpoint")->required();
  ren->add_option("--camera", ren_cam, "Camera JSON")->required();
  ren->add_option("--out", ren_out, "Output PPM image")->required();
  ren->add_option("--depth", ren_depth, "Optional output 16-bit PGM depth map");
  ren->add_option("--steps", ren_cfg.march_steps, "March steps");
  ren->add_option("--bisect", ren_cfg.bisection_iters, "Bisection iterations");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Chamfer evaluation of a mesh or point cloud");
  std::string ev_pred, ev_gt, ev_out;
  int ev_points = 10000;
  uint64_t ev_seed = 0;
  bool ev_icp = false, ev_squared = false;
  int ev_icp_iters = 50;
  ev->add_option("--pred", ev_pred, "Predicted mesh (.ply) or point cloud (.xyz)")->required();
  ev->add_option("--gt", ev_gt, "Ground truth point cloud (.xyz or .ply)")->required();
  ev->add_option("--points", ev_points, "Surface samples when --pred is a mesh");
  ev->add_option("--seed", ev_seed, "Sampling seed");
  ev->add_flag("--icp", ev_icp, "Register prediction to ground truth first");
  ev->add_option("--icp-iters", ev_icp_iters, "ICP iterations");
  ev->add_flag("--squared", ev_squared, "Report squared distances");
  ev->add_option("--out", ev_out, "Optional JSON report path");

  // ---- check-bound ----
  auto* cb = app.add_subcommand("check-bound", "Audit the SDF lower bound against a dataset's scene");
  std::string cb_data;
  int cb_depths = 50;
  double cb_guard = 1.0;
  uint64_t cb_seed = 0;
  cb->add_option("--data", cb_data, "Dataset directory (synthetic, with scene manifest)")->required();
  cb->add_option("--depths", cb_depths, "Random depths per exterior pixel");
  cb->add_option("--guard", cb_guard, "Discretization guard subtracted from the DT (pixels)");
  cb->add_option("--seed", cb_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (threads > 0) set_worker_cap(threads);

  if (*synth) {
    if (synth_ortho) synth_cfg.model = CameraModel::kOrthographic;
    generate_dataset(scene_from_arg(synth_scene), synth_cfg, synth_out);
    std::cout << "synth: wrote " << synth_cfg.n_views << " views at " << synth_cfg.resolution
              << "x" << synth_cfg.resolution << " to " << synth_out << "\n";
    return kOk;
  }

  if (*pre) {
    double mse;
    if (pre_f64) {
      auto params = FieldParams<double>::init(pre_net, pre_seed);
      mse = pretrain_sphere(params, pre_radius, pre_iters, pre_points, pre_lr, pre_seed);
      save_checkpoint(params, pre_out);
    } else {
      auto params = FieldParams<float>::init(pre_net, pre_seed);
      mse = pretrain_sphere(params, pre_radius, pre_iters, pre_points, pre_lr, pre_seed);
      save_checkpoint(params, pre_out);
    }
    std::cout << "pretrain: final mse " << mse << ", checkpoint " << pre_out << "\n";
    return kOk;
  }

  if (*fit) {
    if (!fo.config_path.empty())
      train_config_from_json(slurp(fo.config_path), fo.cfg, fo.weights);
    for (auto& o : fo.overrides) o(fo.cfg, fo.weights);  // flags win
    if (fo.cfg.deterministic) set_worker_cap(1);
    return fo.cfg.float64 ? run_fit_typed<double>(fo) : run_fit_typed<float>(fo);
  }

  if (*ext) {
    auto params = load_checkpoint<float>(ext_ckpt);
    Mesh mesh = marching_cubes(batch_field(params), ext_res, ext_roi);
    write_ply(mesh, ext_out);
    std::cout << "extract: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
              << " triangles -> " << ext_out << "\n";
    return kOk;
  }

  if (*ren) {
    auto params = load_checkpoint<float>(ren_ckpt);
    Camera cam = Camera::from_json(slurp(ren_cam));
    ImageU8 img;
    DepthMap depth;
    render_image(params, cam, ren_cfg, &img, ren_depth.empty() ? nullptr : &depth);
    write_ppm(ren_out, img);
    if (!ren_depth.empty()) write_depth_pgm(ren_depth, depth);
    std::cout << "render: wrote " << ren_out << "\n";
    return kOk;
  }

  if (*ev) {
    PointCloud pred;
    if (ev_pred.size() > 4 && ev_pred.substr(ev_pred.size() - 4) == ".ply") {
      Mesh mesh = read_ply(ev_pred);
      pred.points = mesh.triangles.empty() ? mesh.vertices
                                           : sample_surface_points(mesh, ev_points, ev_seed);
    } else {
      pred = read_xyz(ev_pred);
    }
    PointCloud gt = load_point_cloud(ev_gt);
    nlohmann::json report;
    if (ev_icp) {
      IcpResult icp = icp_register(pred, gt, ev_icp_iters);
      pred = icp.registered;
      report["icp_iterations"] = ev_icp_iters;
    }
    ChamferResult ch = chamfer(pred, gt, ev_squared);
    report["accuracy"] = ch.accuracy;
    report["coverage"] = ch.coverage;
    report["squared"] = ev_squared;
    std::cout << "accuracy " << format_double(ch.accuracy) << "\ncoverage "
              << format_double(ch.coverage) << "\n";
    if (!ev_out.empty()) {
      std::ofstream out(ev_out);
      out << report.dump(2) << "\n";
      if (!out) throw IoError("cannot open for writing: " + ev_out);
    }
    return kOk;
  }

  if (*cb) {
    Dataset data = load_dataset(cb_data);
    if (!data.has_scene())
      throw FormatError("check-bound: dataset manifest has no analytic scene");
    AnalyticScene scene = data.scene();
    int64_t checked = 0, violations = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < data.views.size(); ++v) {
      BoundAudit a = audit_bound(scene, data.views[v], cb_depths, cb_guard,
                                 RngStream::derive(cb_seed, 0xCB, v));
      checked += a.checked;
      violations += a.violations;
      worst = std::min(worst, a.worst_margin);
    }
    std::cout << violations << " violations (" << checked << " checks, worst margin "
              << worst << ")\n";
    return violations == 0 ? kOk : kRuntime;
  }

  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError&) {
    return kUsage;  // CLI11_PARSE already handled printing
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
