#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "skelpose/dataio.hpp"
#include "skelpose/io.hpp"
#include "skelpose/renderer.hpp"

using namespace skelpose;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("skelpose_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Runs the CLI inside `dir` and returns its exit code.
int run(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" SKELPOSE_CLI "' " + args + " >cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

size_t count_files(const fs::path& dir, const std::string& ext) {
  size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_CASE("--help exits 0 without side effects") {
  for (const char* cmd : {"", "synth", "render", "train", "infer", "match", "eval", "annotate"}) {
    const auto dir = work_dir("help");
    INFO(cmd);
    CHECK(run(dir, std::string(cmd) + " --help") == 0);
    fs::remove(dir / "cli.log");
    CHECK(fs::is_empty(dir));
  }
}

TEST_CASE("usage errors exit 2, runtime errors exit 1") {
  const auto dir = work_dir("errors");
  CHECK(run(dir, "") == 2);
  CHECK(run(dir, "frobnicate") == 2);
  CHECK(run(dir, "render --dataset missing.json") == 2);
  CHECK(read_file(dir / "cli.log").find("--dataset") != std::string::npos);
  CHECK(run(dir, "synth --n 0") == 2);
  CHECK(run(dir, "synth --bogus 1") == 2);
  REQUIRE(run(dir, "synth --n 2 --out ds.json") == 0);
  CHECK(run(dir, "render --dataset ds.json --config coco") == 2);
  CHECK(run(dir, "render --dataset ds.json --config single --width 20") == 2);
  CHECK(run(dir, "infer --dataset ds.json --models . --maps generator") == 2);

  atomic_write_file(dir / "bad.json", "{\"samples\": [ {\"id\": 3} ]}");
  CHECK(run(dir, "render --dataset bad.json --out maps") == 1);
  CHECK(read_file(dir / "cli.log").find("bad.json") != std::string::npos);
  const json manifest = load_json(dir / "maps" / "manifest.json");
  CHECK(manifest["status"] == "error");
  CHECK(manifest["command"] == "render");
  CHECK(manifest["error"].get<std::string>().find("samples[0]") != std::string::npos);
}

TEST_CASE("synth is deterministic and writes a manifest") {
  const auto dir = work_dir("synth");
  REQUIRE(run(dir, "synth --n 32 --seed 7 --out a.json") == 0);
  REQUIRE(run(dir, "synth --n 32 --seed 7 --out b.json") == 0);
  CHECK(read_file(dir / "a.json") == read_file(dir / "b.json"));
  REQUIRE(run(dir, "synth --n 32 --seed 8 --out c.json") == 0);
  CHECK(read_file(dir / "a.json") != read_file(dir / "c.json"));
  CHECK(load_dataset(dir / "a.json").samples.size() == 32);

  const json m = load_json(dir / "a.json.manifest.json");
  CHECK(m["command"] == "synth");
  CHECK(m["status"] == "ok");
  CHECK(m["seed"] == 7);
  CHECK(m["config"]["n"] == "32");
  CHECK(m["outputs"][0] == "a.json");
  CHECK(m.contains("wall_clock_s"));
  CHECK(m.contains("version"));
}

TEST_CASE("render h36m on two samples writes 2x11 map pairs") {
  const auto dir = work_dir("render");
  REQUIRE(run(dir, "synth --n 2 --seed 3 --out ds.json") == 0);
  REQUIRE(run(dir, "render --dataset ds.json --config h36m --canvas 32 --out maps") == 0);
  CHECK(count_files(dir / "maps", ".skmp") == 22);
  CHECK(count_files(dir / "maps", ".png") == 44);

  const Dataset ds = load_dataset(dir / "ds.json");
  const MapConfig cfg{1.0, 7, 32};
  const auto pair = read_map_tensor(dir / "maps" / ("s00001_02_" + config_tag(cfg) + ".skmp"));
  const auto expected = render_sample(ds.samples[1], cfg);
  CHECK(pair.fore == expected.fore);
  CHECK(pair.back == expected.back);
  CHECK(read_file(dir / "maps" / ("s00001_02_" + config_tag(cfg) + "_fore.png")) ==
        encode_map_png(pair, MapLayer::kFore));
}

TEST_CASE("eval of ground truth predictions reports zero error") {
  const auto dir = work_dir("eval");
  REQUIRE(run(dir, "synth --n 5 --seed 1 --out ds.json") == 0);
  const Dataset ds = load_dataset(dir / "ds.json");
  std::vector<Prediction> preds;
  for (const auto& s : ds.samples) preds.push_back({s.id, s.joints3d, s.joints2d});
  save_json(predictions_to_json(preds), dir / "pred.json");
  REQUIRE(run(dir, "eval --dataset ds.json --predictions pred.json --out report.csv") == 0);
  const json report = load_json(dir / "report.json");
  CHECK(report["aggregate"]["mean_mpjpe_mm"] == 0.0);
  CHECK(report["aggregate"]["pckh_percent"]["Mean"] == 100.0);
  CHECK(read_file(dir / "report.csv").find("MEAN,0,100") != std::string::npos);
}

TEST_CASE("relative paths resolve against SKELPOSE_DATA_DIR") {
  const auto dir = work_dir("datadir");
  const auto data = work_dir("datadir_root");
  ::setenv("SKELPOSE_DATA_DIR", data.c_str(), 1);
  const int rc = run(dir, "synth --n 2 --out ds.json");
  const int rc2 = run(dir, "render --dataset ds.json --config single --canvas 16 --out maps");
  ::unsetenv("SKELPOSE_DATA_DIR");
  CHECK(rc == 0);
  CHECK(rc2 == 0);
  CHECK(fs::exists(data / "ds.json"));
  CHECK(count_files(data / "maps", ".skmp") == 2);
  CHECK_FALSE(fs::exists(dir / "ds.json"));
}

TEST_CASE("small pipeline runs end to end") {
  const auto dir = work_dir("pipeline");
  REQUIRE(run(dir, "synth --n 6 --seed 2 --out ds.json --detections-out det.json --det-noise 1") == 0);
  REQUIRE(run(dir, "train --dataset ds.json --config mpii --canvas 16 --iters 5 --batch 3 --out reg") == 0);
  CHECK(count_files(dir / "reg", ".csv") == 18);
  REQUIRE(run(dir, "train --kind generator --dataset ds.json --config mpii --canvas 16 --iters 2 --batch 2 --out gen") == 0);
  REQUIRE(run(dir, "infer --dataset ds.json --models reg --maps generator --generators gen --out hyp.json") == 0);
  const auto hyps = hypotheses_from_json(load_json(dir / "hyp.json"));
  REQUIRE(hyps.size() == 6);
  CHECK(hyps[0].hypotheses.size() == 18);
  REQUIRE(run(dir, "match --hypotheses hyp.json --dataset ds.json --detections det.json --out match.csv") == 0);
  CHECK(read_file(dir / "match.csv").rfind("sample_id,selected_index,", 0) == 0);
  REQUIRE(run(dir, "eval --dataset ds.json --predictions match.predictions.json --out report.csv") == 0);
  CHECK(load_json(dir / "report.json")["per_sample"].size() == 6);

  // Generator and regressor grids must agree.
  REQUIRE(run(dir, "train --dataset ds.json --config single --canvas 16 --iters 1 --out reg1") == 0);
  CHECK(run(dir, "infer --dataset ds.json --models reg1 --maps generator --generators gen --out h.json") == 1);
}
