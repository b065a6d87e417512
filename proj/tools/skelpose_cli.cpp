// skelpose: single-binary pipeline driver.
//   synth -> render -> train -> infer -> match -> eval, plus annotate.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "skelpose/annot_service.hpp"
#include "skelpose/dataio.hpp"
#include "skelpose/error.hpp"
#include "skelpose/hypotheses.hpp"
#include "skelpose/io.hpp"
#include "skelpose/metrics.hpp"
#include "skelpose/networks.hpp"
#include "skelpose/renderer.hpp"

#ifndef SKELPOSE_VERSION
#define SKELPOSE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skelpose;

namespace {

// Raised by a command before it starts work; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative paths resolve against SKELPOSE_DATA_DIR when it is set.
std::string resolve_data_path(std::string path) {
  const char* root = std::getenv("SKELPOSE_DATA_DIR");
  if (root && *root && !path.empty() && fs::path(path).is_relative()) {
    return (fs::path(root) / path).string();
  }
  return path;
}

CLI::Option* input_file(CLI::App* app, const std::string& name, std::string& target,
                        const std::string& help) {
  return app->add_option(name, target, help)
      ->transform([](std::string p) { return resolve_data_path(std::move(p)); }, "", "")
      ->check(CLI::ExistingFile);
}

CLI::Option* input_dir(CLI::App* app, const std::string& name, std::string& target,
                       const std::string& help) {
  return app->add_option(name, target, help)
      ->transform([](std::string p) { return resolve_data_path(std::move(p)); }, "", "")
      ->check(CLI::ExistingDirectory);
}

CLI::Option* output_path(CLI::App* app, const std::string& name, std::string& target,
                         const std::string& help) {
  return app->add_option(name, target, help)
      ->transform([](std::string p) { return resolve_data_path(std::move(p)); }, "", "");
}

std::string iso_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Snapshot of every option of a subcommand, as given or defaulted.
json option_snapshot(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_name() == "--help") continue;
    const std::string key = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames()[0];
    if (opt->count() > 0) {
      const auto& r = opt->results();
      out[key] = r.size() == 1 ? json(r[0]) : json(r);
    } else {
      out[key] = opt->get_default_str();
    }
  }
  return out;
}

// Inputs, outputs and status of one command run; written next to the
// primary output on success and on failure.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  fs::path path;

  void write(const std::string& status, const std::string& error, double seconds,
             const std::string& started) const {
    if (path.empty()) return;
    json j{{"command", command},
           {"tool", "skelpose"},
           {"version", SKELPOSE_VERSION},
           {"config", config},
           {"seed", seed},
           {"inputs", inputs},
           {"outputs", outputs},
           {"status", status},
           {"started_at", started},
           {"wall_clock_s", seconds}};
    if (!error.empty()) j["error"] = error;
    try {
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      save_json(j, path);
    } catch (const std::exception& e) {
      std::cerr << "warning: cannot write manifest " << path << ": " << e.what() << "\n";
    }
  }
};

fs::path file_manifest(const fs::path& out) { return out.string() + ".manifest.json"; }
fs::path dir_manifest(const fs::path& dir) { return dir / "manifest.json"; }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::string indexed_name(const std::string& prefix, size_t k, const MapConfig& c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%02zu_", k);
  return prefix + buf + config_tag(c);
}

// ---- options ----

struct GridOptions {
  std::string grid = "h36m";
  double crop = 1.0;
  int width = 10;
  int canvas = 56;

  void add(CLI::App* app, int default_canvas) {
    canvas = default_canvas;
    app->add_option("--config,--grid", grid, "Config grid: h36m, mpii, ensemble or single")
        ->check(CLI::IsMember({"h36m", "mpii", "ensemble", "single"}))
        ->capture_default_str();
    app->add_option("--crop", crop, "Crop scale c for --config single")->capture_default_str();
    app->add_option("--width", width, "Stick width l for --config single")
        ->check(CLI::Range(kMinStickWidth, kMaxStickWidth))
        ->capture_default_str();
    app->add_option("--canvas", canvas, "Canvas size S in pixels")
        ->check(CLI::Range(kMinCanvasSize, 4096))
        ->capture_default_str();
  }

  std::vector<MapConfig> configs() const {
    if (grid == "single") {
      MapConfig c{crop, width, canvas};
      try {
        validate(c);
      } catch (const Error& e) {
        throw UsageError(std::string("--crop: ") + e.what());
      }
      return {c};
    }
    return config_grid(parse_grid_mode(grid), canvas);
  }
};

// ---- commands ----

struct SynthArgs {
  int n = 32;
  std::uint64_t seed = 0;
  std::string out = "dataset.json";
  double fx = 1000, fy = 1000, cx = 500, cy = 500;
  std::string split = "train";
  std::string detections_out;
  double det_noise = 0.0;
  std::uint64_t det_seed = 0;
};

void cmd_synth(const SynthArgs& a, RunManifest& m) {
  m.seed = a.seed;
  m.outputs = {a.out};
  if (!a.detections_out.empty()) m.outputs.push_back(a.detections_out);
  Dataset ds = synth_dataset(a.n, a.seed, Camera{a.fx, a.fy, a.cx, a.cy});
  ds.split = parse_split(a.split);
  ensure_parent(a.out);
  save_dataset(ds, a.out);
  if (!a.detections_out.empty()) {
    ensure_parent(a.detections_out);
    save_json(detections_to_json(detections_from_dataset(ds, a.det_noise, a.det_seed)),
              a.detections_out);
  }
  std::cout << "wrote " << ds.samples.size() << " samples to " << a.out << "\n";
}

struct RenderArgs {
  std::string dataset;
  GridOptions grid;
  std::string out = "maps";
  bool png = true;
};

void cmd_render(const RenderArgs& a, RunManifest& m) {
  const auto configs = a.grid.configs();
  m.inputs = {a.dataset};
  m.outputs = {a.out};
  const Dataset ds = load_dataset(a.dataset);
  fs::create_directories(a.out);
  int pairs = 0;
  for (const Sample& s : ds.samples) {
    if (!s.joints3d) continue;
    for (size_t k = 0; k < configs.size(); ++k) {
      const auto pair = render_sample(s, configs[k]);
      const fs::path base = fs::path(a.out) / indexed_name(s.id, k, configs[k]);
      write_map_tensor(base.string() + ".skmp", pair);
      if (a.png) {
        atomic_write_file(base.string() + "_fore.png", encode_map_png(pair, MapLayer::kFore));
        atomic_write_file(base.string() + "_back.png", encode_map_png(pair, MapLayer::kBack));
      }
      ++pairs;
    }
  }
  std::cout << "rendered " << pairs << " map pairs into " << a.out << "\n";
}

struct TrainArgs {
  std::string kind = "regressor";
  std::string dataset;
  GridOptions grid;
  int iters = 500;
  int batch = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t image_seed = 0;
  std::string out = "models";
};

void cmd_train(const TrainArgs& a, RunManifest& m) {
  const auto configs = a.grid.configs();
  m.seed = a.seed;
  m.inputs = {a.dataset};
  m.outputs = {a.out};
  const Dataset ds = load_dataset(a.dataset);
  std::vector<const Sample*> usable;
  for (const Sample& s : ds.samples)
    if (s.joints3d) usable.push_back(&s);
  if (usable.empty()) throw PreconditionError(a.dataset + ": no sample carries joints3d");
  fs::create_directories(a.out);

  const bool gen = a.kind == "generator";
  json index{{"kind", a.kind}, {"grid", a.grid.grid}, {"models", json::array()}};
  for (size_t k = 0; k < configs.size(); ++k) {
    const MapConfig& cfg = configs[k];
    TrainConfig tc = gen ? default_generator_training() : default_regressor_training();
    tc.max_iterations = a.iters;
    if (a.batch > 0) tc.batch_size = a.batch;
    if (a.lr > 0.0) tc.base_lr = a.lr;
    tc.seed = a.seed + k;
    const std::string name = indexed_name(a.kind, k, cfg);
    const fs::path ckpt = fs::path(a.out) / (name + ".json");
    TrainResult result;
    if (gen) {
      std::vector<GeneratorSample> data;
      for (size_t i = 0; i < usable.size(); ++i) {
        data.push_back({sample_image(*usable[i], cfg, a.image_seed + i), render_sample(*usable[i], cfg)});
      }
      auto model = build_generator(default_generator_spec(cfg.canvas_size), tc.seed);
      result = train_generator(model, data, tc);
      save_model(ckpt, model.parameters(), model.spec(), cfg, tc.seed, tc.max_iterations);
    } else {
      std::vector<RegressorSample> data;
      for (const Sample* s : usable) {
        data.push_back(make_regressor_sample(render_sample(*s, cfg), root_relative(*s->joints3d)));
      }
      auto model = build_regressor(default_regressor_spec(cfg.canvas_size), tc.seed);
      result = train_regressor(model, data, tc);
      save_model(ckpt, model.parameters(), model.spec(), cfg, tc.seed, tc.max_iterations);
    }
    atomic_write_file(fs::path(a.out) / (name + ".loss.csv"), history_csv(result));
    index["models"].push_back({{"file", name + ".json"}, {"config", config_to_json(cfg)}, {"seed", tc.seed}});
    std::cout << name << ": loss " << result.history.front().loss << " -> "
              << result.history.back().loss << "\n";
  }
  save_json(index, fs::path(a.out) / "models.json");
}

std::vector<fs::path> model_files(const fs::path& dir, const std::string& kind) {
  const json index = load_json(dir / "models.json");
  if (index.value("kind", "") != kind) {
    throw PreconditionError((dir / "models.json").string() + ": expected " + kind + " models");
  }
  std::vector<fs::path> files;
  for (const auto& e : index.at("models")) files.push_back(dir / e.at("file").get<std::string>());
  return files;
}

struct InferArgs {
  std::string dataset;
  std::string models;
  std::string maps = "gt";
  std::string generators;
  std::uint64_t image_seed = 0;
  std::string out = "hypotheses.json";
};

void cmd_infer(const InferArgs& a, RunManifest& m) {
  if (a.maps == "generator" && a.generators.empty()) {
    throw UsageError("--generators is required with --maps generator");
  }
  m.inputs = {a.dataset, a.models};
  if (!a.generators.empty()) m.inputs.push_back(a.generators);
  m.outputs = {a.out};
  const Dataset ds = load_dataset(a.dataset);
  std::vector<LoadedRegressor> regs;
  for (const auto& f : model_files(a.models, "regressor")) regs.push_back(load_regressor(f));
  std::vector<LoadedGenerator> gens;
  if (a.maps == "generator") {
    for (const auto& f : model_files(a.generators, "generator")) gens.push_back(load_generator(f));
    if (gens.size() != regs.size()) {
      throw PreconditionError("generator and regressor model counts differ");
    }
    for (size_t k = 0; k < regs.size(); ++k)
      if (!(gens[k].config == regs[k].config)) {
        throw PreconditionError("model " + std::to_string(k) + ": generator and regressor configs differ");
      }
  }

  std::vector<SampleHypotheses> out;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (!s.joints3d) {
      std::cerr << "skipping " << s.id << ": no joints3d to render maps from\n";
      continue;
    }
    SampleHypotheses sh{s.id, {}};
    for (size_t k = 0; k < regs.size(); ++k) {
      const MapConfig& cfg = regs[k].config;
      const SkeletonMapPair maps =
          gens.empty() ? render_sample(s, cfg)
                       : predict_maps(gens[k].model, sample_image(s, cfg, a.image_seed + i), cfg);
      sh.hypotheses.entries.push_back(
          {cfg, infer_pose(regs[k].model, maps), indexed_name("regressor", k, cfg)});
    }
    out.push_back(std::move(sh));
  }
  ensure_parent(a.out);
  save_json(hypotheses_to_json(out), a.out);
  std::cout << "wrote " << out.size() << " hypothesis sets to " << a.out << "\n";
}

struct MatchArgs {
  std::string hypotheses;
  std::string dataset;
  std::string detections;
  std::optional<double> root_depth;
  double nominal_depth = 3000.0;
  std::string out = "match.csv";
  std::string pred_out;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void cmd_match(const MatchArgs& a, RunManifest& m) {
  const fs::path pred_out = a.pred_out.empty() ? fs::path(a.out).replace_extension(".predictions.json")
                                               : fs::path(a.pred_out);
  m.inputs = {a.hypotheses, a.dataset};
  if (!a.detections.empty()) m.inputs.push_back(a.detections);
  m.outputs = {a.out, pred_out.string()};
  const Dataset ds = load_dataset(a.dataset);
  const auto all = hypotheses_from_json(load_json(a.hypotheses));
  std::vector<Detection> dets;
  if (!a.detections.empty()) dets = detections_from_json(load_json(a.detections));
  const auto detection_for = [&](const Sample& s) -> const Pose2D& {
    if (dets.empty()) return s.joints2d;
    for (const auto& d : dets)
      if (d.sample_id == s.id) return d.joints2d;
    throw PreconditionError(a.detections + ": no detection for sample '" + s.id + "'");
  };

  std::string csv = "sample_id,selected_index,source,reproj_error_px2,mpjpe_mm,oracle_index,oracle_mpjpe_mm\n";
  std::vector<Prediction> preds;
  for (const auto& sh : all) {
    const Sample* s = ds.find(sh.sample_id);
    if (!s) throw PreconditionError(a.hypotheses + ": unknown sample '" + sh.sample_id + "'");
    const double depth = a.root_depth ? *a.root_depth
                         : s->joints3d ? s->joints3d->at(kThorax).z
                                       : a.nominal_depth;
    const auto match = match_to_2d(sh.hypotheses, detection_for(*s), s->camera, depth);
    const Pose3D& chosen = sh.hypotheses.entries[match.index].pose;
    csv += sh.sample_id + "," + std::to_string(match.index) + "," +
           sh.hypotheses.entries[match.index].source + "," + fmt(match.reprojection_error) + ",";
    if (s->joints3d) {
      const auto oracle = oracle_select(sh.hypotheses, root_relative(*s->joints3d));
      csv += fmt(mpjpe(chosen, *s->joints3d)) + "," + std::to_string(oracle.index) + "," +
             fmt(oracle.mpjpe_mm) + "\n";
    } else {
      csv += ",,\n";
    }
    preds.push_back({sh.sample_id, chosen, project_pose(s->camera, match.pose)});
  }
  ensure_parent(a.out);
  atomic_write_file(a.out, csv);
  ensure_parent(pred_out);
  save_json(predictions_to_json(preds), pred_out);
  std::cout << "matched " << preds.size() << " samples; report " << a.out << "\n";
}

struct EvalArgs {
  std::string dataset;
  std::string predictions;
  double tau = 0.5;
  std::string out = "report.csv";
};

void cmd_eval(const EvalArgs& a, RunManifest& m) {
  const fs::path json_out = fs::path(a.out).replace_extension(".json");
  m.inputs = {a.dataset, a.predictions};
  m.outputs = {a.out, json_out.string()};
  const Dataset ds = load_dataset(a.dataset);
  const auto preds = predictions_from_json(load_json(a.predictions));
  std::vector<SampleEval> evals;
  for (const auto& p : preds) {
    const Sample* s = ds.find(p.sample_id);
    if (!s) throw PreconditionError(a.predictions + ": unknown sample '" + p.sample_id + "'");
    SampleEval e{p.sample_id, std::nullopt, std::nullopt};
    if (p.joints3d && s->joints3d) e.mpjpe_mm = mpjpe(*p.joints3d, *s->joints3d);
    if (p.joints2d) e.hits = pckh(*p.joints2d, s->joints2d, s->head_size, a.tau);
    evals.push_back(std::move(e));
  }
  const EvalReport report = aggregate(evals);
  ensure_parent(a.out);
  atomic_write_file(a.out, report_csv(report));
  save_json(report_json(report), json_out);
  if (report.mean_mpjpe_mm) std::cout << "MPJPE " << *report.mean_mpjpe_mm << " mm\n";
  for (const auto& g : report.pckh) std::cout << "PCKh " << g.name << " " << g.pckh_percent << "\n";
}

struct AnnotateArgs {
  std::string dataset;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
};

void cmd_annotate(const AnnotateArgs& a, RunManifest& m) {
  m.inputs = {a.dataset};
  m.outputs = {a.dataset};
  // Handle SIGINT/SIGTERM synchronously on this thread; the server runs on another.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  AnnotationService service({a.dataset, a.ui_dir});
  const int port = service.bind(a.host, a.port);
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  std::thread server([&] { service.run(); });
  int sig = 0;
  sigwait(&signals, &sig);
  service.stop();
  server.join();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skelpose: skeleton-map 3D pose pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SKELPOSE_VERSION);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--n", synth.n, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  output_path(s, "--out", synth.out, "Dataset JSON")->capture_default_str();
  s->add_option("--fx", synth.fx, "Focal length x (px)")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--fy", synth.fy, "Focal length y (px)")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--cx", synth.cx, "Principal point x (px)")->capture_default_str();
  s->add_option("--cy", synth.cy, "Principal point y (px)")->capture_default_str();
  s->add_option("--split", synth.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  output_path(s, "--detections-out", synth.detections_out, "Also write 2D detections here");
  s->add_option("--det-noise", synth.det_noise, "Gaussian detection noise (px)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s->add_option("--det-seed", synth.det_seed, "Detection noise seed")->capture_default_str();

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Render fore/back skeleton maps for every sample");
  input_file(r, "--dataset", render.dataset, "Dataset JSON")->required();
  render.grid.add(r, 56);
  output_path(r, "--out", render.out, "Output directory")->capture_default_str();
  r->add_flag("!--no-png", render.png, "Skip PNG previews");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one model per config of a grid");
  t->add_option("--kind", train.kind, "generator or regressor")
      ->check(CLI::IsMember({"generator", "regressor"}))
      ->capture_default_str();
  input_file(t, "--dataset", train.dataset, "Training dataset JSON")->required();
  train.grid.add(t, 32);
  t->add_option("--iters", train.iters, "SGD iterations per model")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--batch", train.batch, "Batch size (0: model default)")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--lr", train.lr, "Base learning rate (0: model default)")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--seed", train.seed, "Seed; model k uses seed + k")->capture_default_str();
  t->add_option("--image-seed", train.image_seed, "Person-image noise seed (generator)")->capture_default_str();
  output_path(t, "--out", train.out, "Output directory")->capture_default_str();

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Produce one 3D hypothesis per trained regressor");
  input_file(i, "--dataset", infer.dataset, "Dataset JSON")->required();
  input_dir(i, "--models", infer.models, "Regressor directory from `train`")->required();
  i->add_option("--maps", infer.maps, "Map source: gt or generator")
      ->check(CLI::IsMember({"gt", "generator"}))
      ->capture_default_str();
  input_dir(i, "--generators", infer.generators, "Generator directory from `train`");
  i->add_option("--image-seed", infer.image_seed, "Person-image noise seed")->capture_default_str();
  output_path(i, "--out", infer.out, "Hypotheses JSON")->capture_default_str();

  MatchArgs match;
  auto* mt = app.add_subcommand("match", "Select one hypothesis per sample by 2D reprojection");
  input_file(mt, "--hypotheses", match.hypotheses, "Hypotheses JSON from `infer`")->required();
  input_file(mt, "--dataset", match.dataset, "Dataset JSON (cameras, ground truth)")->required();
  input_file(mt, "--detections", match.detections, "2D detections (default: dataset joints2d)");
  mt->add_option("--root-depth", match.root_depth, "Root depth in mm (default: ground truth)")
      ->check(CLI::PositiveNumber);
  mt->add_option("--nominal-depth", match.nominal_depth, "Root depth for samples without 3D")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  output_path(mt, "--out", match.out, "Selection report CSV")->capture_default_str();
  output_path(mt, "--pred-out", match.pred_out, "Predictions JSON (default: <out>.predictions.json)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "MPJPE and PCKh report");
  input_file(e, "--dataset", eval.dataset, "Ground-truth dataset JSON")->required();
  input_file(e, "--predictions", eval.predictions, "Predictions JSON")->required();
  e->add_option("--tau", eval.tau, "PCKh threshold factor")->check(CLI::PositiveNumber)->capture_default_str();
  output_path(e, "--out", eval.out, "Report CSV; JSON is written alongside")->capture_default_str();

  AnnotateArgs annotate;
  auto* an = app.add_subcommand("annotate", "Serve the annotation API and UI");
  input_file(an, "--dataset", annotate.dataset, "Dataset JSON, updated in place")->required();
  an->add_option("--host", annotate.host, "Bind address")->capture_default_str();
  an->add_option("--port", annotate.port, "Port (0: any free port)")->check(CLI::Range(0, 65535))->capture_default_str();
  input_dir(an, "--ui-dir", annotate.ui_dir, "Static UI bundle served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  RunManifest manifest;
  manifest.command = cmd->get_name();
  manifest.config = option_snapshot(cmd);
  std::function<void()> run;
  if (cmd == s) {
    manifest.path = file_manifest(synth.out);
    run = [&] { cmd_synth(synth, manifest); };
  } else if (cmd == r) {
    manifest.path = dir_manifest(render.out);
    run = [&] { cmd_render(render, manifest); };
  } else if (cmd == t) {
    manifest.path = dir_manifest(train.out);
    run = [&] { cmd_train(train, manifest); };
  } else if (cmd == i) {
    manifest.path = file_manifest(infer.out);
    run = [&] { cmd_infer(infer, manifest); };
  } else if (cmd == mt) {
    manifest.path = file_manifest(match.out);
    run = [&] { cmd_match(match, manifest); };
  } else if (cmd == e) {
    manifest.path = file_manifest(eval.out);
    run = [&] { cmd_eval(eval, manifest); };
  } else {
    manifest.path = annotate.dataset + ".annotate.manifest.json";
    run = [&] { cmd_annotate(annotate, manifest); };
  }

  const std::string started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    run();
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    manifest.write("error", err.what(), elapsed(), started);
    return 1;
  }
  manifest.write("ok", "", elapsed(), started);
  return 0;
}
