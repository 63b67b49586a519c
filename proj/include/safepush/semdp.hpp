#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/follower.hpp"
#include "safepush/sac.hpp"
#include "safepush/sim.hpp"
#include "safepush/trajopt.hpp"
#include "safepush/world.hpp"

namespace safepush::semdp {

/// Everything the macro-step machinery needs: replan interval, planner
/// constants, follower constants and the simulator config.
struct SemdpParams {
  int k = 10;                     // low-level steps per RL action
  double subgoal_range = 1.0;     // box bound on the relative subgoal action
  double gamma = 0.99;
  trajopt::PlanMode mode = trajopt::PlanMode::training;

  double eps_prime = 0.5;
  double delta_init = 0.0;
  double delta_smooth = 0.0;
  int n_waypoints = 30;
  double traj_dt = 0.1;
  double lambda_init = 10.0;
  double lambda_growth = 5.0;
  double lambda_max = 1e4;
  int train_inner_iters = 10;
  int infer_inner_iters = 50;
  int max_outer_iters = 8;
  double clearance_tol = 1e-3;
  double obstacle_guard = 0.01;
  double planner_noise_sd = 0.01;

  double d_min = 0.2;

  sim::SimConfig sim;
};

/// One macro transition: observation, relative subgoal, accumulated reward and
/// cost over at most k low-level steps, and the terminal flag.
struct SemdpTransition {
  sim::Observation s;
  Vec2 a_prime{0.0, 0.0};
  sim::Observation s_next;
  double r = 0.0;
  int c = 0;
  bool done = false;
};

int observation_dim(int lidar_bins);

/// Network input: concatenated lidar categories plus robot-relative goal and
/// box displacements.
template <typename T>
void write_features(const sim::Observation& obs, T* out) {
  size_t i = 0;
  for (const std::vector<double>* v :
       {&obs.lidar_hazard, &obs.lidar_pillar, &obs.lidar_box, &obs.lidar_goal})
    for (double x : *v) out[i++] = static_cast<T>(x);
  out[i++] = static_cast<T>(obs.goal_delta.x());
  out[i++] = static_cast<T>(obs.goal_delta.y());
  out[i++] = static_cast<T>(obs.box_delta.x());
  out[i++] = static_cast<T>(obs.box_delta.y());
}

template <typename T>
std::vector<T> features(const sim::Observation& obs) {
  std::vector<T> out(observation_dim(static_cast<int>(obs.lidar_hazard.size())));
  write_features(obs, out.data());
  return out;
}

/// Uniform-sampling ring buffer of macro transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

  void push(SemdpTransition t);
  size_t size() const { return data_.size(); }
  const SemdpTransition& at(size_t i) const { return data_[i]; }

  /// Featurized batch for the learner; deliberately drops the cost field.
  sac::Batch<float> sample_batch(int batch_size, Rng& rng) const;

 private:
  size_t capacity_;
  size_t next_ = 0;
  std::vector<SemdpTransition> data_;
};

/// Shift a trajectory forward by `drop` waypoints, padding the tail; used to
/// warm-start the next plan from the previous one.
trajopt::Trajectory shift_for_warm_start(const trajopt::Trajectory& traj, int drop);

/// The modified-MDP environment: actions are relative subgoals, transitions run
/// the trajectory optimizer and k follower/simulator steps.
class SemdpEnv {
 public:
  SemdpEnv(world::WorldLayout layout, const SemdpParams& params);

  const sim::Observation& reset(uint64_t seed);
  SemdpTransition step(const Vec2& action_rel);

  bool done() const { return done_; }
  bool success() const { return success_; }
  int low_level_steps() const { return sim_.state().step_count; }
  const sim::Observation& observation() const { return obs_; }
  const trajopt::SolveReport& last_plan() const { return last_plan_; }
  const sim::PushWorldSim& simulator() const { return sim_; }

  void enable_trace(sim::EpisodeTrace* sink) { trace_ = sink; }

 private:
  SemdpParams params_;
  sim::PushWorldSim sim_;
  sim::Observation obs_;
  trajopt::SolveReport last_plan_;
  std::optional<trajopt::Trajectory> warm_;
  int warm_drop_ = 0;
  bool done_ = true;
  bool success_ = false;
  sim::EpisodeTrace* trace_ = nullptr;
};

struct EpisodeRecord {
  int64_t semdp_step = 0;  // cumulative SEMDP steps at episode end
  int episode = 0;
  double reward = 0.0;
  double cost = 0.0;
  int success = 0;
};

struct TrainOptions {
  uint64_t seed = 0;
  int64_t budget = 200000;  // SEMDP steps
  world::Difficulty difficulty = world::Difficulty::easy;
  int warmup_steps = 1000;
  int batch_size = 256;
  size_t buffer_capacity = 1000000;
  int updates_per_step = 1;
  int hidden = 256;
  float lr = 3e-4f;
  float tau = 0.005f;
  int64_t checkpoint_interval = 50000;
};

struct TrainResult {
  std::vector<EpisodeRecord> curve;
  int64_t steps_run = 0;
};

using CheckpointSink = std::function<void(int64_t step, const sac::SacAgent<float>&)>;

/// Full training loop (Alg.-style): per episode, plan + execute macro steps,
/// store transitions, one SAC update per SEMDP step after warmup.
TrainResult train(const SemdpParams& params, const TrainOptions& opts,
                  sac::SacAgent<float>& agent_out, const CheckpointSink& checkpoint = {});

/// Builds the agent that `train` expects, seeded deterministically.
sac::SacAgent<float> make_agent(const SemdpParams& params, const TrainOptions& opts);

struct EvalEpisode {
  int episode = 0;
  int success = 0;
  double reward = 0.0;
  double cost = 0.0;
};

struct EvalResult {
  std::vector<EvalEpisode> episodes;
  double success_rate = 0.0;
  double mean_reward = 0.0;
  double mean_cost = 0.0;
};

using Policy = std::function<Vec2(const sim::Observation&)>;

/// Deterministic evaluation over the given layouts, one episode each; episodes
/// may run on parallel simulator instances, results are merged in episode
/// order. Traces, when requested, are filled per episode.
EvalResult evaluate(const Policy& policy, const std::vector<world::WorldLayout>& layouts,
                    const SemdpParams& params, uint64_t eval_seed,
                    std::vector<sim::EpisodeTrace>* traces = nullptr);

/// Mean-action policy adapter around a trained agent.
Policy greedy_policy(const sac::SacAgent<float>& agent);

// ---- checkpoint files ----

struct Checkpoint {
  int obs_dim = 0;
  int act_dim = 0;
  int hidden = 0;
  float action_scale = 1.0f;
  std::vector<double> params;
  std::string config_text;
  uint64_t config_hash = 0;
};

std::string serialize_checkpoint(const sac::SacAgent<float>& agent,
                                 const std::string& config_text);
Checkpoint parse_checkpoint(const std::string& bytes);
sac::SacAgent<float> agent_from_checkpoint(const Checkpoint& ck, float gamma, float tau,
                                           float lr);

}  // namespace safepush::semdp
