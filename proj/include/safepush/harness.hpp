#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "safepush/semdp.hpp"

namespace safepush::harness {

/// Every run constant in one flat record; serialized verbatim into the output
/// directory so a run can be reproduced from its artifacts alone.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string difficulty = "easy";
  int64_t budget = 200000;
  int eval_episodes = 50;
  uint64_t layouts_seed = 12345;

  double eps = 0.0;
  double max_step = 0.05;
  int horizon = 0;  // 0 derives from difficulty: 300 easy, 1000 level1/2
  int lidar_bins = 16;
  double lidar_max_range = 3.0;
  double lidar_noise_sd = 0.01;
  double planner_noise_sd = 0.01;

  double eps_prime = 0.5;
  int n_waypoints = 30;
  double traj_dt = 0.1;
  double delta_init = 0.0;
  double delta_smooth = 0.0;
  double lambda_init = 10.0;
  double lambda_growth = 5.0;
  double lambda_max = 1e4;
  int train_inner_iters = 10;
  int infer_inner_iters = 50;
  int max_outer_iters = 8;
  double clearance_tol = 1e-3;
  double obstacle_guard = 0.01;

  double d_min = 0.2;

  int k = 10;
  double subgoal_range = 1.0;
  double gamma = 0.99;
  int hidden = 256;
  double lr = 3e-4;
  int batch_size = 256;
  int64_t buffer_capacity = 1000000;
  double tau = 0.005;
  int warmup_steps = 1000;
  int updates_per_step = 1;
  int64_t checkpoint_interval = 50000;
};

using FieldPtr = std::variant<double ExperimentConfig::*, int ExperimentConfig::*,
                              int64_t ExperimentConfig::*, uint64_t ExperimentConfig::*,
                              std::string ExperimentConfig::*>;

struct FieldDef {
  const char* name;
  FieldPtr ptr;
};

const std::vector<FieldDef>& config_fields();

std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);
void set_config_field(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// All invariant checks; empty result means the config is runnable.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

int resolved_horizon(const ExperimentConfig& cfg);
semdp::SemdpParams to_semdp_params(const ExperimentConfig& cfg, trajopt::PlanMode mode);
semdp::TrainOptions to_train_options(const ExperimentConfig& cfg);

/// Evaluation layouts are a pure function of (layouts_seed, difficulty).
std::vector<world::WorldLayout> eval_layouts(const ExperimentConfig& cfg, int episodes);

// Commands return a process exit status and write only below out_dir.
int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_eval(const std::string& checkpoint_path, uint64_t layouts_seed, int episodes,
             const std::string& out_dir, trajopt::PlanMode mode,
             std::optional<double> eps_prime_override = std::nullopt, bool write_traces = true);
int cmd_sweep_epsilon(const std::string& checkpoint_path, const std::vector<double>& eps_primes,
                      int episodes, uint64_t layouts_seed, const std::string& out_dir);
int cmd_validate_config(const ExperimentConfig& cfg);
int cmd_replay_trace(const std::string& trace_path);

// Small file helpers shared with the tests.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

std::string eval_csv(const semdp::EvalResult& result);

}  // namespace safepush::harness
