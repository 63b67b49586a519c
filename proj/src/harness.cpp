#include "safepush/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace safepush::harness {

namespace fs = std::filesystem;

const std::vector<FieldDef>& config_fields() {
  static const std::vector<FieldDef> fields = {
      {"seed", &ExperimentConfig::seed},
      {"difficulty", &ExperimentConfig::difficulty},
      {"budget", &ExperimentConfig::budget},
      {"eval_episodes", &ExperimentConfig::eval_episodes},
      {"layouts_seed", &ExperimentConfig::layouts_seed},
      {"eps", &ExperimentConfig::eps},
      {"max_step", &ExperimentConfig::max_step},
      {"horizon", &ExperimentConfig::horizon},
      {"lidar_bins", &ExperimentConfig::lidar_bins},
      {"lidar_max_range", &ExperimentConfig::lidar_max_range},
      {"lidar_noise_sd", &ExperimentConfig::lidar_noise_sd},
      {"planner_noise_sd", &ExperimentConfig::planner_noise_sd},
      {"eps_prime", &ExperimentConfig::eps_prime},
      {"n_waypoints", &ExperimentConfig::n_waypoints},
      {"traj_dt", &ExperimentConfig::traj_dt},
      {"delta_init", &ExperimentConfig::delta_init},
      {"delta_smooth", &ExperimentConfig::delta_smooth},
      {"lambda_init", &ExperimentConfig::lambda_init},
      {"lambda_growth", &ExperimentConfig::lambda_growth},
      {"lambda_max", &ExperimentConfig::lambda_max},
      {"train_inner_iters", &ExperimentConfig::train_inner_iters},
      {"infer_inner_iters", &ExperimentConfig::infer_inner_iters},
      {"max_outer_iters", &ExperimentConfig::max_outer_iters},
      {"clearance_tol", &ExperimentConfig::clearance_tol},
      {"obstacle_guard", &ExperimentConfig::obstacle_guard},
      {"d_min", &ExperimentConfig::d_min},
      {"k", &ExperimentConfig::k},
      {"subgoal_range", &ExperimentConfig::subgoal_range},
      {"gamma", &ExperimentConfig::gamma},
      {"hidden", &ExperimentConfig::hidden},
      {"lr", &ExperimentConfig::lr},
      {"batch_size", &ExperimentConfig::batch_size},
      {"buffer_capacity", &ExperimentConfig::buffer_capacity},
      {"tau", &ExperimentConfig::tau},
      {"warmup_steps", &ExperimentConfig::warmup_steps},
      {"updates_per_step", &ExperimentConfig::updates_per_step},
      {"checkpoint_interval", &ExperimentConfig::checkpoint_interval},
  };
  return fields;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out = "schema_version = 1\n";
  for (const FieldDef& f : config_fields()) {
    out += f.name;
    out += " = ";
    std::visit(
        [&](auto ptr) {
          using M = std::remove_reference_t<decltype(cfg.*ptr)>;
          if constexpr (std::is_same_v<M, const double> || std::is_same_v<M, double>)
            out += format_double(cfg.*ptr);
          else if constexpr (std::is_same_v<M, const std::string> ||
                             std::is_same_v<M, std::string>)
            out += cfg.*ptr;
          else
            out += std::to_string(cfg.*ptr);
        },
        f.ptr);
    out += '\n';
  }
  return out;
}

void set_config_field(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const FieldDef& f : config_fields()) {
    if (key != f.name) continue;
    std::visit(
        [&](auto ptr) {
          using M = std::remove_reference_t<decltype(cfg.*ptr)>;
          if constexpr (std::is_same_v<M, double>)
            cfg.*ptr = std::stod(value);
          else if constexpr (std::is_same_v<M, int>)
            cfg.*ptr = std::stoi(value);
          else if constexpr (std::is_same_v<M, int64_t>)
            cfg.*ptr = std::stoll(value);
          else if constexpr (std::is_same_v<M, uint64_t>)
            cfg.*ptr = std::stoull(value);
          else
            cfg.*ptr = value;
        },
        f.ptr);
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  bool saw_version = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed config line: " + line);
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t");
      const size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "schema_version") {
      if (value != "1") throw std::invalid_argument("unsupported config schema: " + value);
      saw_version = true;
      continue;
    }
    set_config_field(cfg, key, value);
  }
  if (!saw_version) throw std::invalid_argument("config missing schema_version line");
  return cfg;
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  require(cfg.eps_prime >= cfg.eps, "eps_prime must be >= eps");
  require(cfg.eps_prime > 0.0, "eps_prime must be positive");
  require(cfg.eps >= 0.0, "eps must be non-negative");
  require(cfg.k >= 1, "k must be >= 1");
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma must lie in (0, 1)");
  require(cfg.lidar_bins >= 4, "lidar_bins must be >= 4");
  require(cfg.lidar_max_range > 0.0, "lidar_max_range must be positive");
  require(cfg.lidar_noise_sd >= 0.0, "lidar_noise_sd must be non-negative");
  require(cfg.planner_noise_sd >= 0.0, "planner_noise_sd must be non-negative");
  require(cfg.n_waypoints >= 2, "n_waypoints must be >= 2");
  require(cfg.traj_dt > 0.0, "traj_dt must be positive");
  require(cfg.lambda_init > 0.0, "lambda_init must be positive");
  require(cfg.lambda_max >= cfg.lambda_init, "lambda_max must be >= lambda_init");
  require(cfg.lambda_growth > 1.0, "lambda_growth must exceed 1");
  require(cfg.train_inner_iters >= 1 && cfg.infer_inner_iters >= 1,
          "inner iteration budgets must be >= 1");
  require(cfg.max_outer_iters >= 1, "max_outer_iters must be >= 1");
  require(cfg.clearance_tol >= 0.0, "clearance_tol must be non-negative");
  require(cfg.obstacle_guard >= 0.0, "obstacle_guard must be non-negative");
  require(cfg.d_min > 0.0, "d_min must be positive");
  require(cfg.max_step > 0.0, "max_step must be positive");
  require(cfg.subgoal_range > 0.0, "subgoal_range must be positive");
  require(cfg.hidden >= 1, "hidden must be >= 1");
  require(cfg.lr > 0.0, "lr must be positive");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.buffer_capacity >= cfg.batch_size, "buffer_capacity must hold one batch");
  require(cfg.tau > 0.0 && cfg.tau <= 1.0, "tau must lie in (0, 1]");
  require(cfg.warmup_steps >= 0, "warmup_steps must be non-negative");
  require(cfg.updates_per_step >= 0, "updates_per_step must be non-negative");
  require(cfg.horizon >= 0, "horizon must be non-negative");
  require(cfg.budget >= 0, "budget must be non-negative");
  require(cfg.eval_episodes >= 1, "eval_episodes must be >= 1");
  try {
    world::difficulty_from_string(cfg.difficulty);
  } catch (const std::exception&) {
    errors.push_back("difficulty must be easy, level1 or level2");
  }
  return errors;
}

int resolved_horizon(const ExperimentConfig& cfg) {
  if (cfg.horizon > 0) return cfg.horizon;
  return cfg.difficulty == "easy" ? 300 : 1000;
}

semdp::SemdpParams to_semdp_params(const ExperimentConfig& cfg, trajopt::PlanMode mode) {
  semdp::SemdpParams p;
  p.k = cfg.k;
  p.subgoal_range = cfg.subgoal_range;
  p.gamma = cfg.gamma;
  p.mode = mode;
  p.eps_prime = cfg.eps_prime;
  p.delta_init = cfg.delta_init;
  p.delta_smooth = cfg.delta_smooth;
  p.n_waypoints = cfg.n_waypoints;
  p.traj_dt = cfg.traj_dt;
  p.lambda_init = cfg.lambda_init;
  p.lambda_growth = cfg.lambda_growth;
  p.lambda_max = cfg.lambda_max;
  p.train_inner_iters = cfg.train_inner_iters;
  p.infer_inner_iters = cfg.infer_inner_iters;
  p.max_outer_iters = cfg.max_outer_iters;
  p.clearance_tol = cfg.clearance_tol;
  p.obstacle_guard = cfg.obstacle_guard;
  p.planner_noise_sd = cfg.planner_noise_sd;
  p.d_min = cfg.d_min;
  p.sim.max_step = cfg.max_step;
  p.sim.eps = cfg.eps;
  p.sim.horizon = resolved_horizon(cfg);
  p.sim.lidar_bins = cfg.lidar_bins;
  p.sim.lidar_max_range = cfg.lidar_max_range;
  p.sim.lidar_noise_sd = cfg.lidar_noise_sd;
  return p;
}

semdp::TrainOptions to_train_options(const ExperimentConfig& cfg) {
  semdp::TrainOptions o;
  o.seed = cfg.seed;
  o.budget = cfg.budget;
  o.difficulty = world::difficulty_from_string(cfg.difficulty);
  o.warmup_steps = cfg.warmup_steps;
  o.batch_size = cfg.batch_size;
  o.buffer_capacity = static_cast<size_t>(cfg.buffer_capacity);
  o.updates_per_step = cfg.updates_per_step;
  o.hidden = cfg.hidden;
  o.lr = static_cast<float>(cfg.lr);
  o.tau = static_cast<float>(cfg.tau);
  o.checkpoint_interval = cfg.checkpoint_interval;
  return o;
}

std::vector<world::WorldLayout> eval_layouts(const ExperimentConfig& cfg, int episodes) {
  const world::Difficulty diff = world::difficulty_from_string(cfg.difficulty);
  std::vector<world::WorldLayout> layouts;
  layouts.reserve(episodes);
  for (int e = 0; e < episodes; ++e)
    layouts.push_back(world::sample_layout(seed_stream(cfg.layouts_seed, 0x17A0000ULL + e), diff));
  return layouts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::string curve_csv(const std::vector<semdp::EpisodeRecord>& curve) {
  std::string out = "semdp_step,episode,reward,cost,success\n";
  for (const semdp::EpisodeRecord& r : curve) {
    out += std::to_string(r.semdp_step) + ',' + std::to_string(r.episode) + ',' +
           format_double(r.reward) + ',' + format_double(r.cost) + ',' +
           std::to_string(r.success) + '\n';
  }
  return out;
}

}  // namespace

std::string eval_csv(const semdp::EvalResult& result) {
  std::string out = "episode,success,reward,cost\n";
  for (const semdp::EvalEpisode& e : result.episodes) {
    out += std::to_string(e.episode) + ',' + std::to_string(e.success) + ',' +
           format_double(e.reward) + ',' + format_double(e.cost) + '\n';
  }
  out += "mean," + format_double(result.success_rate) + ',' + format_double(result.mean_reward) +
         ',' + format_double(result.mean_cost) + '\n';
  return out;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::vector<std::string> errors = validate_config(cfg);
  if (!errors.empty()) {
    for (const std::string& e : errors) std::cerr << "config error: " << e << '\n';
    return 2;
  }
  const std::string config_text = serialize_config(cfg);
  try {
    fs::create_directories(out_dir);
    write_file(out_dir + "/config.txt", config_text);

    const semdp::SemdpParams params = to_semdp_params(cfg, trajopt::PlanMode::training);
    const semdp::TrainOptions opts = to_train_options(cfg);
    sac::SacAgent<float> agent = semdp::make_agent(params, opts);
    const semdp::CheckpointSink sink = [&](int64_t step, const sac::SacAgent<float>& a) {
      write_file(out_dir + "/checkpoint_" + std::to_string(step) + ".ckpt",
                 semdp::serialize_checkpoint(a, config_text));
    };
    const semdp::TrainResult result = semdp::train(params, opts, agent, sink);
    write_file(out_dir + "/checkpoint_final.ckpt",
               semdp::serialize_checkpoint(agent, config_text));
    write_file(out_dir + "/learning_curve.csv", curve_csv(result.curve));
  } catch (const std::exception& e) {
    std::cerr << "train failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

namespace {

struct LoadedCheckpoint {
  ExperimentConfig cfg;
  sac::SacAgent<float> agent;
};

LoadedCheckpoint load_agent(const std::string& checkpoint_path) {
  const semdp::Checkpoint ck = semdp::parse_checkpoint(read_file(checkpoint_path));
  ExperimentConfig cfg = parse_config(ck.config_text);
  sac::SacAgent<float> agent = semdp::agent_from_checkpoint(
      ck, static_cast<float>(cfg.gamma), static_cast<float>(cfg.tau),
      static_cast<float>(cfg.lr));
  return {std::move(cfg), std::move(agent)};
}

}  // namespace

int cmd_eval(const std::string& checkpoint_path, uint64_t layouts_seed, int episodes,
             const std::string& out_dir, trajopt::PlanMode mode,
             std::optional<double> eps_prime_override, bool write_traces) {
  try {
    LoadedCheckpoint loaded = load_agent(checkpoint_path);
    ExperimentConfig cfg = loaded.cfg;
    cfg.layouts_seed = layouts_seed;
    if (eps_prime_override) cfg.eps_prime = *eps_prime_override;
    if (cfg.eps_prime < cfg.eps) {
      std::cerr << "config error: eps_prime must be >= eps\n";
      return 2;
    }
    const semdp::SemdpParams params = to_semdp_params(cfg, mode);
    const std::vector<world::WorldLayout> layouts = eval_layouts(cfg, episodes);
    std::vector<sim::EpisodeTrace> traces;
    const semdp::EvalResult result =
        semdp::evaluate(semdp::greedy_policy(loaded.agent), layouts, params, layouts_seed,
                        write_traces ? &traces : nullptr);
    fs::create_directories(out_dir);
    write_file(out_dir + "/eval.csv", eval_csv(result));
    if (write_traces) {
      for (size_t e = 0; e < traces.size(); ++e)
        write_file(out_dir + "/traces/episode_" + std::to_string(e) + ".trace",
                   sim::serialize_trace(traces[e]));
    }
  } catch (const std::exception& e) {
    std::cerr << "eval failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_sweep_epsilon(const std::string& checkpoint_path, const std::vector<double>& eps_primes,
                      int episodes, uint64_t layouts_seed, const std::string& out_dir) {
  if (eps_primes.empty()) {
    std::cerr << "sweep needs at least one eps_prime value\n";
    return 2;
  }
  try {
    LoadedCheckpoint loaded = load_agent(checkpoint_path);
    for (double ep : eps_primes) {
      if (ep < loaded.cfg.eps) {
        std::cerr << "config error: swept eps_prime " << ep << " below eps\n";
        return 2;
      }
    }
    std::string csv = "eps_prime,success_rate,mean_reward,mean_cost\n";
    ExperimentConfig cfg = loaded.cfg;
    cfg.layouts_seed = layouts_seed;
    const std::vector<world::WorldLayout> layouts = eval_layouts(cfg, episodes);
    for (double ep : eps_primes) {
      semdp::SemdpParams params = to_semdp_params(cfg, trajopt::PlanMode::inference);
      params.eps_prime = ep;
      const semdp::EvalResult result =
          semdp::evaluate(semdp::greedy_policy(loaded.agent), layouts, params, layouts_seed);
      csv += format_double(ep) + ',' + format_double(result.success_rate) + ',' +
             format_double(result.mean_reward) + ',' + format_double(result.mean_cost) + '\n';
    }
    fs::create_directories(out_dir);
    write_file(out_dir + "/sweep.csv", csv);
  } catch (const std::exception& e) {
    std::cerr << "sweep failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_validate_config(const ExperimentConfig& cfg) {
  const std::vector<std::string> errors = validate_config(cfg);
  if (errors.empty()) {
    std::cout << "config ok\n";
    return 0;
  }
  for (const std::string& e : errors) std::cerr << "config error: " << e << '\n';
  return 2;
}

int cmd_replay_trace(const std::string& trace_path) {
  try {
    const sim::EpisodeTrace trace = sim::parse_episode_trace(read_file(trace_path));
    if (trace.actions.size() != trace.rows.size()) {
      std::cerr << "trace has " << trace.actions.size() << " actions but " << trace.rows.size()
                << " state rows\n";
      return 1;
    }
    sim::PushWorldSim simulator(trace.layout, trace.cfg);
    simulator.reset(trace.seed);
    for (size_t i = 0; i < trace.actions.size(); ++i) {
      const sim::StepOutcome out = simulator.step(trace.actions[i]);
      const sim::EpisodeTrace::Row& row = trace.rows[i];
      const bool match = out.next_state.step_count == row.t &&
                         out.next_state.robot_pos == row.robot &&
                         out.next_state.box_pos == row.box && out.reward == row.reward &&
                         out.cost == row.cost;
      if (!match) {
        std::cerr << "replay mismatch at step " << row.t << '\n';
        return 1;
      }
    }
    std::cout << "replay OK: " << trace.rows.size() << " steps match bit-exactly\n";
  } catch (const std::exception& e) {
    std::cerr << "replay failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace safepush::harness
