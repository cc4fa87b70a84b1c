#pragma once

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cten/checkpoint.hpp"
#include "cten/config_json.hpp"
#include "cten/dataset_io.hpp"
#include "cten/temporal.hpp"
#include "cten/train.hpp"
#include "cten/verify.hpp"

// Command-line front end. Kept in a header (cli_main) so the test suite can
// drive it in-process; tools/cten.cpp is a thin wrapper.
//
// Exit codes: 0 success, 1 usage/config error, 2 partial experiment failure
// (some seeds aborted; the report records them).

namespace cten {

namespace cli_detail {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

inline void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config");
  cmd->add_option("--out", args.out_dir,
                  "output directory (default $CTEN_OUT_DIR or ./cten_out)");
  cmd->add_option("--set", args.overrides,
                  "config override, dot path: --set train.epochs=5");
}

inline std::filesystem::path resolve_out_dir(const CommonArgs& args) {
  std::string dir = args.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("CTEN_OUT_DIR")) dir = env;
    if (dir.empty()) dir = "cten_out";
  }
  std::filesystem::create_directories(dir);
  return dir;
}

/// defaults -> config file -> --set overrides, strictly validated. A
/// config_echo.json written by a previous run is accepted directly (its
/// nested "config" block is unwrapped), so any run reproduces from its echo.
inline TrainConfig resolve_config(const CommonArgs& args) {
  json tree = to_json(TrainConfig{});
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw DomainError("cannot open config '" + args.config_path + "'");
    json file_tree;
    try {
      file_tree = json::parse(in);
    } catch (const json::exception& e) {
      throw DomainError("config '" + args.config_path + "': " + e.what());
    }
    if (file_tree.is_object() && file_tree.contains("config") &&
        file_tree.contains("build"))
      file_tree = file_tree.at("config");
    // file values overlay the defaults section by section
    tree.merge_patch(file_tree);
  }
  for (const std::string& assignment : args.overrides)
    apply_override(tree, assignment);
  TrainConfig cfg = train_config_from_json(tree);
  cfg.validate();
  return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DomainError("write to '" + path.string() + "' failed");
}

inline void write_config_echo(const std::filesystem::path& dir,
                              const std::string& command,
                              const TrainConfig& cfg) {
  const json echo{{"build", build_id()}, {"command", command}, {"config", to_json(cfg)}};
  write_text(dir / "config_echo.json", echo.dump(2) + "\n");
}

inline void write_loss_curves(const std::filesystem::path& dir,
                              const RunReport& report,
                              const std::string& prefix = "loss_seed_") {
  for (const SeedResult& r : report.per_seed) {
    if (r.failed) continue;
    std::string csv = "epoch,train_loss\n";
    char buf[40];
    for (std::size_t e = 0; e < r.train_loss_curve.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, r.train_loss_curve[e]);
      csv += buf;
    }
    write_text(dir / (prefix + std::to_string(r.seed) + ".csv"), csv);
  }
}

inline void print_report(const char* name, const RunReport& r) {
  std::printf("%s: params=%zu mean_acc=%.4f std=%s best=%.4f worst=%.4f mean_time=%.2fs",
              name, r.parameter_count, r.mean_acc,
              r.std_defined ? std::to_string(r.std_acc).c_str() : "n/a",
              r.best_acc, r.worst_acc, r.mean_time_s);
  if (r.n_failed) std::printf("  [%zu seed(s) FAILED]", r.n_failed);
  std::printf("\n");
}

inline int report_exit_code(const RunReport& r) {
  return r.n_failed == 0 ? 0 : 2;
}

// ---- subcommand bodies ------------------------------------------------------

inline int cmd_gen_data(const CommonArgs& args, std::size_t samples,
                        std::uint64_t seed, bool also_csv) {
  TrainConfig cfg = resolve_config(args);
  const auto dir = resolve_out_dir(args);
  IpdConfig gen = cfg.dataset.ipd;
  gen.n_samples = samples ? samples : cfg.dataset.n_train + cfg.dataset.n_test;
  gen.seed = seed;
  SpikeBatch batch = generate(gen);
  save_batch(batch, (dir / "dataset.bin").string());
  if (also_csv) export_csv(batch, (dir / "dataset.csv").string());
  write_config_echo(dir, "gen-data", cfg);
  std::printf("wrote %zu samples to %s\n", batch.batch_size(),
              (dir / "dataset.bin").string().c_str());
  return 0;
}

inline int cmd_train(const CommonArgs& args, bool temporal_attention,
                     bool save_checkpoints) {
  TrainConfig cfg = resolve_config(args);
  if (temporal_attention && cfg.model.ablation.attention_heads == 0)
    cfg.model.ablation.attention_heads = 8;
  cfg.model.validate();
  const auto dir = resolve_out_dir(args);
  write_config_echo(dir, temporal_attention ? "ta-train" : "train", cfg);
  TrainedHook hook;
  if (save_checkpoints)
    hook = [&](std::uint64_t seed, const CtenParams& params) {
      save_checkpoint({params, seed, cfg.epochs},
                      (dir / ("params_seed_" + std::to_string(seed) + ".ckpt"))
                          .string());
    };
  RunReport report = run_multi_seed(cfg, hook);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  write_loss_curves(dir, report);
  print_report(temporal_attention ? "ta-train" : "train", report);
  return report_exit_code(report);
}

inline int cmd_ablate(const CommonArgs& args) {
  TrainConfig base = resolve_config(args);
  const auto dir = resolve_out_dir(args);
  write_config_echo(dir, "ablate", base);

  struct Variant {
    const char* name;
    AblationConfig ablation;
  };
  const Variant variants[] = {
      {"full", {true, true, Pooling::kMeanMax, 0}},
      {"no_interaction", {true, false, Pooling::kMeanMax, 0}},
      {"no_phase", {false, true, Pooling::kMeanMax, 0}},
      {"mean_only", {true, true, Pooling::kMean, 0}},
      {"max_only", {true, true, Pooling::kMax, 0}},
  };
  json out = json::array();
  int exit_code = 0;
  for (const Variant& v : variants) {
    TrainConfig cfg = base;
    cfg.model.ablation = v.ablation;
    RunReport report = run_multi_seed(cfg);
    print_report(v.name, report);
    json entry = to_json(report);
    entry["variant"] = v.name;
    out.push_back(std::move(entry));
    exit_code = std::max(exit_code, report_exit_code(report));
    write_loss_curves(dir, report, std::string("loss_") + v.name + "_seed_");
  }
  const json doc{{"schema", "cten-ablation-report/1"},
                 {"build", build_id()},
                 {"variants", out}};
  write_text(dir / "ablate_report.json", doc.dump(2) + "\n");
  return exit_code;
}

inline int cmd_baseline(const CommonArgs& args, std::size_t hidden) {
  TrainConfig cfg = resolve_config(args);
  const auto dir = resolve_out_dir(args);
  write_config_echo(dir, "baseline", cfg);
  RunReport report = mlp_baseline_run(cfg, hidden);
  write_text(dir / "baseline_report.json", to_json(report).dump(2) + "\n");
  write_loss_curves(dir, report, "loss_baseline_seed_");
  print_report("baseline", report);
  return report_exit_code(report);
}

inline int cmd_demo_appendix(const CommonArgs& args, double lambda,
                             std::size_t delay) {
  TrainConfig cfg = resolve_config(args);
  const auto dir = resolve_out_dir(args);
  TwoChannelDemoConfig demo_cfg;
  if (lambda > 0) demo_cfg.lambda = lambda;
  if (delay > 0) demo_cfg.pulse_delay = delay;
  TwoChannelDemo demo = reduced_two_channel_demo(demo_cfg);
  write_trace_csv((dir / "demo_input.csv").string(), demo.input, demo_cfg.dt, "ch");
  write_trace_csv((dir / "demo_projected.csv").string(), demo.projected,
                  demo_cfg.dt, "h");
  write_trace_csv((dir / "demo_accumulated.csv").string(), demo.accumulated,
                  demo_cfg.dt, "hacc");
  write_trace_csv((dir / "demo_wave.csv").string(), demo.wave, demo_cfg.dt, "psi");
  write_trace_csv((dir / "demo_energy.csv").string(), demo.energy, demo_cfg.dt, "p");
  write_config_echo(dir, "demo-appendix", cfg);
  std::printf("wrote 5 stage traces to %s\n", dir.string().c_str());
  return 0;
}

inline int cmd_export_traces(const CommonArgs& args,
                             const std::string& checkpoint_path,
                             std::uint64_t seed, std::size_t sample_index) {
  TrainConfig cfg = resolve_config(args);
  const auto dir = resolve_out_dir(args);

  CtenParams params = checkpoint_path.empty()
                          ? init_params(cfg.model, derive_seed(seed, kSeedInit))
                          : load_checkpoint(checkpoint_path).params;
  PreparedData data = prepare_data(cfg.dataset, seed);
  if (sample_index >= data.test.batch_size())
    throw DomainError("sample index " + std::to_string(sample_index) +
                      " out of range for test set of " +
                      std::to_string(data.test.batch_size()));
  const std::size_t t_steps = data.test.t_steps(), d = data.test.channels();
  Tensor sample({t_steps, d},
                std::vector<double>(
                    data.test.events.data() + sample_index * t_steps * d,
                    data.test.events.data() + (sample_index + 1) * t_steps * d));
  Tensor grid = make_time_grid(t_steps, data.test.config.dt);
  EnergyTraces traces = latent_energy_traces(params, sample, grid);

  write_trace_csv((dir / "raster.csv").string(), sample, data.test.config.dt, "ch");
  write_trace_csv((dir / "energy.csv").string(), traces.energy,
                  data.test.config.dt, "p");
  write_trace_csv((dir / "psi_real.csv").string(), traces.psi_real,
                  data.test.config.dt, "re");
  if (traces.psi_imag.size() == traces.psi_real.size())
    write_trace_csv((dir / "psi_imag.csv").string(), traces.psi_imag,
                    data.test.config.dt, "im");
  write_config_echo(dir, "export-traces", cfg);
  std::printf("wrote raster + latent traces to %s\n", dir.string().c_str());
  return 0;
}

inline int cmd_verify() {
  bool all = true;
  for (const VerifyResult& r : run_verification()) {
    std::printf("[%s] %s (%s)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  using namespace cli_detail;
  CLI::App app{"continuous temporal energy networks: data, training, analysis"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  std::size_t gen_samples = 0;
  std::uint64_t gen_seed = 1;
  bool gen_csv = false;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a spike dataset file");
  add_common(gen, gen_args);
  gen->add_option("--samples", gen_samples, "sample count (default train+test)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_flag("--csv", gen_csv, "also export CSV");

  CommonArgs train_args;
  bool train_ckpt = false;
  CLI::App* train = app.add_subcommand("train", "train the model, multi-seed");
  add_common(train, train_args);
  train->add_flag("--save-checkpoints", train_ckpt,
                  "write params_seed_<n>.ckpt per seed");

  CommonArgs ta_args;
  bool ta_ckpt = false;
  CLI::App* ta = app.add_subcommand("ta-train",
                                    "train the temporal-attention variant (8 heads)");
  add_common(ta, ta_args);
  ta->add_flag("--save-checkpoints", ta_ckpt,
               "write params_seed_<n>.ckpt per seed");

  CommonArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "run the five-variant ablation sweep");
  add_common(ablate, ablate_args);

  CommonArgs base_args;
  std::size_t baseline_hidden = 32;
  CLI::App* baseline = app.add_subcommand("baseline", "train the flattened-input MLP reference");
  add_common(baseline, base_args);
  baseline->add_option("--hidden", baseline_hidden, "baseline hidden width");

  CommonArgs demo_args;
  double demo_lambda = 0.0;
  std::size_t demo_delay = 0;
  CLI::App* demo = app.add_subcommand("demo-appendix",
                                      "export the reduced two-channel demo stages");
  add_common(demo, demo_args);
  demo->add_option("--lambda", demo_lambda, "accumulation decay rate (1/s)");
  demo->add_option("--delay", demo_delay, "channel-2 pulse delay in bins");

  CommonArgs trace_args;
  std::string trace_checkpoint;
  std::uint64_t trace_seed = 1;
  std::size_t trace_sample = 0;
  CLI::App* traces = app.add_subcommand("export-traces",
                                        "export input raster + latent energy traces");
  add_common(traces, trace_args);
  traces->add_option("--checkpoint", trace_checkpoint, "parameter checkpoint to load");
  traces->add_option("--seed", trace_seed, "data / init seed");
  traces->add_option("--sample", trace_sample, "test-set sample index");

  CLI::App* verify = app.add_subcommand("verify",
                                        "run gradient and parameter-count oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help exits 0; parse errors exit 1
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args, gen_samples, gen_seed, gen_csv);
    if (train->parsed()) return cmd_train(train_args, false, train_ckpt);
    if (ta->parsed()) return cmd_train(ta_args, true, ta_ckpt);
    if (ablate->parsed()) return cmd_ablate(ablate_args);
    if (baseline->parsed()) return cmd_baseline(base_args, baseline_hidden);
    if (demo->parsed()) return cmd_demo_appendix(demo_args, demo_lambda, demo_delay);
    if (traces->parsed())
      return cmd_export_traces(trace_args, trace_checkpoint, trace_seed, trace_sample);
    if (verify->parsed()) return cmd_verify();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace cten
