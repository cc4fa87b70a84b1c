#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cten/cli.hpp"
#include "cten/dataset_io.hpp"

using namespace cten;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv = {"cten"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("cten_cli_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Overrides that shrink everything so CLI training runs in seconds.
std::vector<std::string> tiny_task(const fs::path& out) {
  return {"--out",  out.string(),
          "--set",  "dataset.n_ear=8",
          "--set",  "dataset.time_steps=30",
          "--set",  "dataset.n_classes=6",
          "--set",  "dataset.n_train=60",
          "--set",  "dataset.n_test=24",
          "--set",  "model.input_channels=16",
          "--set",  "model.hidden=12",
          "--set",  "model.rank=4",
          "--set",  "model.n_classes=6",
          "--set",  "model.mlp_hidden=16",
          "--set",  "train.epochs=2",
          "--set",  "train.seeds=[1,2]"};
}

std::vector<std::string> with(std::vector<std::string> base,
                              std::initializer_list<std::string> extra) {
  base.insert(base.begin(), extra);
  return base;
}

}  // namespace

TEST_CASE("gen-data writes a loadable dataset and a config echo") {
  fs::path out = fresh_dir("gen");
  int rc = run_cli(with(tiny_task(out), {"gen-data", "--samples", "12",
                                         "--seed", "9", "--csv"}));
  CHECK(rc == 0);
  SpikeBatch batch = load_batch((out / "dataset.bin").string());
  CHECK(batch.batch_size() == 12);
  CHECK(batch.channels() == 16);
  SpikeBatch from_csv = ingest_csv((out / "dataset.csv").string());
  CHECK(from_csv.events == batch.events);
  CHECK(from_csv.labels == batch.labels);
  CHECK(fs::exists(out / "config_echo.json"));
}

TEST_CASE("train writes report.json and loss curves; reruns are identical") {
  fs::path out = fresh_dir("train");
  int rc = run_cli(with(tiny_task(out), {"train"}));
  CHECK(rc == 0);
  REQUIRE(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "loss_seed_1.csv"));
  CHECK(fs::exists(out / "loss_seed_2.csv"));
  json report1 = json::parse(std::ifstream(out / "report.json"));
  CHECK(report1.at("schema") == "cten-run-report/1");
  CHECK(report1.at("per_seed").size() == 2);

  fs::path out2 = fresh_dir("train2");
  CHECK(run_cli(with(tiny_task(out2), {"train"})) == 0);
  json report2 = json::parse(std::ifstream(out2 / "report.json"));
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(report1.at("per_seed")[i].at("final_test_accuracy") ==
          report2.at("per_seed")[i].at("final_test_accuracy"));
}

TEST_CASE("train accepts a dataset file reference") {
  fs::path out = fresh_dir("trainfile");
  REQUIRE(run_cli(with(tiny_task(out), {"gen-data", "--samples", "84",
                                        "--seed", "3"})) == 0);
  const std::string data_file = (out / "dataset.bin").string();
  auto args = tiny_task(out);
  args.push_back("--set");
  args.push_back("dataset.file=" + data_file);
  int rc = run_cli(with(std::move(args), {"train"}));
  CHECK(rc == 0);
  json report = json::parse(std::ifstream(out / "report.json"));
  CHECK(report.at("config").at("dataset").at("file") == data_file);
}

TEST_CASE("unknown --set keys and bad config files exit with code 1") {
  fs::path out = fresh_dir("bad");
  CHECK(run_cli({"train", "--out", out.string(), "--set",
                 "train.epochz=3"}) == 1);

  fs::path cfg = out / "broken.json";
  std::ofstream(cfg) << "{ not json";
  CHECK(run_cli({"train", "--config", cfg.string()}) == 1);

  std::ofstream(cfg, std::ios::trunc) << R"({"model": {"hiden": 4}})";
  CHECK(run_cli({"train", "--config", cfg.string()}) == 1);

  CHECK(run_cli({"no-such-command"}) == 1);
}

TEST_CASE("ablate reports the five published parameter counts") {
  fs::path out = fresh_dir("ablate");
  // Default (full-size) model dims: the counts are the published ones.
  // Tiny data and a single short seed keep the runtime small.
  int rc = run_cli({"ablate", "--out", out.string(),
                    "--set", "dataset.n_train=40",
                    "--set", "dataset.n_test=12",
                    "--set", "train.epochs=1",
                    "--set", "train.seeds=[1]"});
  CHECK(rc == 0);
  json doc = json::parse(std::ifstream(out / "ablate_report.json"));
  REQUIRE(doc.at("variants").size() == 5);
  const std::vector<std::size_t> want = {122316, 106956, 122316, 101836, 101836};
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(doc.at("variants")[i].at("parameter_count").get<std::size_t>() ==
          want[i]);
}

TEST_CASE("demo-appendix and export-traces write their CSV sets") {
  fs::path out = fresh_dir("demo");
  CHECK(run_cli({"demo-appendix", "--out", out.string()}) == 0);
  for (const char* name : {"demo_input.csv", "demo_projected.csv",
                           "demo_accumulated.csv", "demo_wave.csv",
                           "demo_energy.csv"})
    CHECK(fs::exists(out / name));

  fs::path tout = fresh_dir("traces");
  CHECK(run_cli(with(tiny_task(tout), {"export-traces", "--seed", "4"})) == 0);
  for (const char* name : {"raster.csv", "energy.csv", "psi_real.csv",
                           "psi_imag.csv"})
    CHECK(fs::exists(tout / name));

  // header shape: time + one column per channel/latent
  std::ifstream raster(tout / "raster.csv");
  std::string header;
  std::getline(raster, header);
  CHECK(header.substr(0, 8) == "time,ch0");
}

TEST_CASE("export-traces round trips through a checkpoint") {
  fs::path out = fresh_dir("ckpt");
  ModelSpec spec;
  spec.input_channels = 16;
  spec.hidden = 12;
  spec.rank = 4;
  spec.n_classes = 6;
  spec.mlp_hidden = 16;
  Checkpoint ckpt{init_params(spec, 5), 5, 0};
  const fs::path ckpt_path = out / "params.ckpt";
  save_checkpoint(ckpt, ckpt_path.string());
  int rc = run_cli(with(tiny_task(out), {"export-traces", "--checkpoint",
                                         ckpt_path.string()}));
  CHECK(rc == 0);
  CHECK(fs::exists(out / "energy.csv"));
}

TEST_CASE("train --save-checkpoints writes loadable per-seed parameters") {
  fs::path out = fresh_dir("savec");
  REQUIRE(run_cli(with(tiny_task(out), {"train", "--save-checkpoints"})) == 0);
  for (int seed : {1, 2}) {
    const fs::path p = out / ("params_seed_" + std::to_string(seed) + ".ckpt");
    REQUIRE(fs::exists(p));
    Checkpoint ckpt = load_checkpoint(p.string());
    CHECK(ckpt.seed == static_cast<std::uint64_t>(seed));
    CHECK(ckpt.params.spec.hidden == 12);
  }
}

TEST_CASE("verify subcommand passes on a healthy build") {
  CHECK(run_cli({"verify"}) == 0);
}

TEST_CASE("a config echo reproduces the run it came from") {
  fs::path out = fresh_dir("echo1");
  REQUIRE(run_cli(with(tiny_task(out), {"train"})) == 0);
  json report1 = json::parse(std::ifstream(out / "report.json"));

  fs::path out2 = fresh_dir("echo2");
  REQUIRE(run_cli({"train", "--config", (out / "config_echo.json").string(),
                   "--out", out2.string()}) == 0);
  json report2 = json::parse(std::ifstream(out2 / "report.json"));
  CHECK(report1.at("config") == report2.at("config"));
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(report1.at("per_seed")[i].at("final_test_accuracy") ==
          report2.at("per_seed")[i].at("final_test_accuracy"));
}

// Untrained-model oracle: zero learning rate must land at chance level,
// within a 99.9% binomial confidence interval of 1/12 on 200 test samples.
TEST_CASE("train with learning_rate=0 reports chance-level accuracy") {
  fs::path out = fresh_dir("lr0");
  int rc = run_cli({"train", "--out", out.string(),
                    "--set", "train.learning_rate=0",
                    "--set", "train.epochs=1",
                    "--set", "train.seeds=[1]",
                    "--set", "dataset.n_train=64"});
  CHECK(rc == 0);
  json report = json::parse(std::ifstream(out / "report.json"));
  const double acc =
      report.at("per_seed")[0].at("final_test_accuracy").get<double>();
  const double p = 1.0 / 12.0;
  const double half_width = 3.29 * std::sqrt(p * (1 - p) / 200.0);
  CHECK(acc >= p - half_width);
  CHECK(acc <= p + half_width);
}
