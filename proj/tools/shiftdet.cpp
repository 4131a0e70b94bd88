// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "shiftdet/cli/commands.hpp"

using namespace shiftdet;

int main(int argc, char** argv) {
  CLI::App app{"shiftdet: synthetic domain-shift detection experiments"};
  app.require_subcommand(1);
  // Global flags may also follow the verb.
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  CommandOptions opt;
  app.add_option("--config", config_path, "experiment config (JSON); defaults apply when omitted");
  app.add_option("--seed", seed, "overrides scene.seed and train.seed");
  app.add_option("--out", out_dir, "experiment directory (default: config output_dir)");
  app.add_flag("--force", opt.force, "overwrite existing datasets or config snapshot");
  app.add_flag("--dry-run", opt.dry_run, "validate and report without writing or training");

  auto* gen = app.add_subcommand("gen-data", "generate all dataset splits");
  auto* pre = app.add_subcommand("pretrain", "source-only burn-in");
  auto* adapt = app.add_subcommand("adapt", "teacher-student adaptation");
  std::string init;
  std::optional<int> stop_at;
  adapt->add_option("--init", init, "burn-in checkpoint (default checkpoints/pretrain.ckpt)");
  adapt->add_flag("--resume", opt.resume, "continue from checkpoints/adapt_latest.ckpt");
  adapt->add_option("--stop-at", stop_at, "stop after this many total iterations");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ckpt;
  eval->add_option("--checkpoint", ckpt, "checkpoint (default checkpoints/adapt_final.ckpt)");
  eval->add_option("--split", opt.split, "split name");
  eval->add_option("--which", opt.which, "teacher or student");
  auto* ablate = app.add_subcommand("ablate", "variant grid and lambda_dis sweep");
  auto* curves = app.add_subcommand("curves", "CSV and SVG curves from a metrics log");
  std::string log_path;
  curves->add_option("--log", log_path, "metrics log (default metrics.log)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) cfg.scene.seed = *seed, cfg.setup.train.seed = *seed;
    cfg.validate();
    if (!init.empty()) opt.init_checkpoint = init;
    if (!ckpt.empty()) opt.checkpoint = ckpt;
    if (!log_path.empty()) opt.log_path = log_path;
    opt.stop_at = stop_at;
    const ExperimentDir dir(out_dir.empty() ? cfg.output_dir : out_dir);

    if (*gen) return cmd_gen_data(cfg, dir, opt);
    if (*pre) return cmd_pretrain(cfg, dir, opt);
    if (*adapt) return cmd_adapt(cfg, dir, opt);
    if (*eval) return cmd_eval(cfg, dir, opt);
    if (*ablate) return cmd_ablate(cfg, dir, opt);
    if (*curves) return cmd_curves(cfg, dir, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
