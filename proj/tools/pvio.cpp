// Batch entry points for synthetic visual-inertial experiments: scene
// generation, sliding-window estimation, plane detection and trajectory
// evaluation. Exit codes: 0 ok, 1 usage error, 2 runtime error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pvio/pipeline.hpp"

namespace {

pvio::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return pvio::ExperimentConfig{};
  return pvio::load_experiment_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plane-regularized photometric visual-inertial estimation harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, bundle_dir, est_path, gt_path;
  int frame = -1;

  CLI::App* synth = app.add_subcommand("synth", "render a ground-truthed scene bundle");
  synth->add_option("--config", config_path, "experiment config file");
  synth->add_option("--out", out_dir, "output bundle directory")->required();

  CLI::App* run = app.add_subcommand("run", "estimate a trajectory from a bundle");
  run->add_option("--bundle", bundle_dir, "scene bundle directory")->required();
  run->add_option("--config", config_path, "experiment config file");
  run->add_option("--out", out_dir, "output directory")->required();

  CLI::App* detect = app.add_subcommand("detect", "detect planes in one bundle keyframe");
  detect->add_option("--bundle", bundle_dir, "scene bundle directory")->required();
  detect->add_option("--config", config_path, "experiment config file");
  detect->add_option("--frame", frame, "keyframe index (default: middle)");

  CLI::App* eval = app.add_subcommand("eval", "compare estimated and reference trajectories");
  eval->add_option("--est", est_path, "estimated trajectory (TUM format)")->required();
  eval->add_option("--gt", gt_path, "reference trajectory (TUM format)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      pvio::cmd_synth(load_config(config_path), out_dir);
      std::cerr << "bundle written to " << out_dir << "\n";
    } else if (run->parsed()) {
      pvio::cmd_run(bundle_dir, load_config(config_path), out_dir);
      std::cerr << "estimate written to " << out_dir << "\n";
    } else if (detect->parsed()) {
      std::cout << pvio::cmd_detect(bundle_dir, load_config(config_path), frame).dump(2)
                << std::endl;
    } else if (eval->parsed()) {
      std::cout << pvio::cmd_eval(est_path, gt_path).dump(2) << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
