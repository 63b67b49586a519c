// Command-line experiment driver: train, eval, sweep-epsilon, validate-config,
// replay-trace. Output paths resolve against $SAFEPUSH_OUT_ROOT when relative.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "safepush/harness.hpp"

namespace {

using safepush::harness::ExperimentConfig;

std::string resolve_out(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return dir;
  const char* root = std::getenv("SAFEPUSH_OUT_ROOT");
  if (!root || !*root) return dir;
  return (std::filesystem::path(root) / p).string();
}

// One CLI flag per config field, so any run constant can be set inline.
void add_config_flags(CLI::App* app, ExperimentConfig& cfg) {
  for (const auto& field : safepush::harness::config_fields()) {
    const std::string flag = std::string("--") + field.name;
    std::visit([&](auto ptr) { app->add_option(flag, cfg.*ptr); }, field.ptr);
  }
}

ExperimentConfig load_config_if_given(const std::string& path) {
  if (path.empty()) return {};
  return safepush::harness::parse_config(safepush::harness::read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safepush: safe box-pushing with an embedded trajectory optimizer"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run a training experiment");
  std::string train_config_path, train_out = "run";
  train->add_option("--config", train_config_path, "config file to start from");
  train->add_option("--out", train_out, "output directory");
  ExperimentConfig train_cfg;
  add_config_flags(train, train_cfg);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_out = "eval";
  uint64_t eval_layouts_seed = 12345;
  int eval_episodes = 50;
  std::string plan_mode = "adaptive";
  double eval_eps_prime = -1.0;
  bool no_traces = false;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--out", eval_out);
  eval->add_option("--layouts-seed", eval_layouts_seed);
  eval->add_option("--episodes", eval_episodes);
  eval->add_option("--plan-mode", plan_mode)->check(CLI::IsMember({"adaptive", "fixed"}));
  eval->add_option("--eps-prime", eval_eps_prime, "override the clearance threshold");
  eval->add_flag("--no-traces", no_traces);

  // sweep-epsilon
  auto* sweep = app.add_subcommand("sweep-epsilon", "eval across clearance thresholds");
  std::string sweep_ckpt, sweep_out = "sweep";
  std::vector<double> sweep_values;
  uint64_t sweep_layouts_seed = 12345;
  int sweep_episodes = 50;
  sweep->add_option("--checkpoint", sweep_ckpt)->required();
  sweep->add_option("--out", sweep_out);
  sweep->add_option("--eps-prime-list", sweep_values, "thresholds to sweep")->required();
  sweep->add_option("--layouts-seed", sweep_layouts_seed);
  sweep->add_option("--episodes", sweep_episodes);

  // validate-config
  auto* validate = app.add_subcommand("validate-config", "check a config and exit");
  std::string validate_config_path;
  validate->add_option("--config", validate_config_path);
  ExperimentConfig validate_cfg;
  add_config_flags(validate, validate_cfg);

  // replay-trace
  auto* replay = app.add_subcommand("replay-trace", "re-simulate a trace and verify it");
  std::string trace_path;
  replay->add_option("--trace", trace_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      ExperimentConfig cfg = load_config_if_given(train_config_path);
      // re-apply flags on top of the file
      for (const auto& field : safepush::harness::config_fields()) {
        if (train->count(std::string("--") + field.name) > 0)
          std::visit([&](auto ptr) { cfg.*ptr = train_cfg.*ptr; }, field.ptr);
      }
      return safepush::harness::cmd_train(cfg, resolve_out(train_out));
    }
    if (eval->parsed()) {
      const auto mode = plan_mode == "fixed" ? safepush::trajopt::PlanMode::training
                                             : safepush::trajopt::PlanMode::inference;
      std::optional<double> override_eps;
      if (eval_eps_prime > 0.0) override_eps = eval_eps_prime;
      return safepush::harness::cmd_eval(eval_ckpt, eval_layouts_seed, eval_episodes,
                                         resolve_out(eval_out), mode, override_eps, !no_traces);
    }
    if (sweep->parsed()) {
      return safepush::harness::cmd_sweep_epsilon(sweep_ckpt, sweep_values, sweep_episodes,
                                                  sweep_layouts_seed, resolve_out(sweep_out));
    }
    if (validate->parsed()) {
      ExperimentConfig cfg = load_config_if_given(validate_config_path);
      for (const auto& field : safepush::harness::config_fields()) {
        if (validate->count(std::string("--") + field.name) > 0)
          std::visit([&](auto ptr) { cfg.*ptr = validate_cfg.*ptr; }, field.ptr);
      }
      return safepush::harness::cmd_validate_config(cfg);
    }
    if (replay->parsed()) {
      return safepush::harness::cmd_replay_trace(trace_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
