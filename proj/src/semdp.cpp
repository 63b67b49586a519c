#include "safepush/semdp.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>

namespace safepush::semdp {

int observation_dim(int lidar_bins) { return 4 * lidar_bins + 4; }

void ReplayBuffer::push(SemdpTransition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

sac::Batch<float> ReplayBuffer::sample_batch(int batch_size, Rng& rng) const {
  if (static_cast<size_t>(batch_size) > data_.size())
    throw std::logic_error("replay buffer smaller than batch size");
  const int od = observation_dim(static_cast<int>(data_[0].s.lidar_hazard.size()));
  sac::Batch<float> batch;
  batch.size = batch_size;
  batch.obs.resize(static_cast<size_t>(batch_size) * od);
  batch.obs_next.resize(batch.obs.size());
  batch.act.resize(static_cast<size_t>(batch_size) * 2);
  batch.rew.resize(batch_size);
  batch.not_done.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const SemdpTransition& t = data_[rng.uniform_int(data_.size())];
    write_features(t.s, batch.obs.data() + static_cast<size_t>(i) * od);
    write_features(t.s_next, batch.obs_next.data() + static_cast<size_t>(i) * od);
    batch.act[2 * i] = static_cast<float>(t.a_prime.x());
    batch.act[2 * i + 1] = static_cast<float>(t.a_prime.y());
    batch.rew[i] = static_cast<float>(t.r);
    batch.not_done[i] = t.done ? 0.0f : 1.0f;
  }
  return batch;
}

trajopt::Trajectory shift_for_warm_start(const trajopt::Trajectory& traj, int drop) {
  trajopt::Trajectory out;
  out.dt = traj.dt;
  const int n = traj.n();
  drop = std::clamp(drop, 0, n - 1);
  out.x.reserve(n);
  out.v.reserve(n);
  for (int i = drop; i < n; ++i) {
    out.x.push_back(traj.x[i]);
    out.v.push_back(traj.v[i]);
  }
  while (out.n() < n) {
    out.x.push_back(traj.x.back());
    out.v.push_back(Vec2::Zero());
  }
  return out;
}

SemdpEnv::SemdpEnv(world::WorldLayout layout, const SemdpParams& params)
    : params_(params), sim_(std::move(layout), params.sim) {
  if (params_.k < 1) throw std::invalid_argument("k must be >= 1");
  if (params_.eps_prime < params_.sim.eps)
    throw std::invalid_argument("eps_prime must be >= the environment cost margin eps");
}

const sim::Observation& SemdpEnv::reset(uint64_t seed) {
  auto [state, obs] = sim_.reset(seed);
  obs_ = std::move(obs);
  warm_.reset();
  warm_drop_ = 0;
  done_ = false;
  success_ = false;
  if (trace_) {
    trace_->layout = sim_.layout();
    trace_->cfg = sim_.config();
    trace_->seed = seed;
    trace_->actions.clear();
    trace_->rows.clear();
  }
  return obs_;
}

SemdpTransition SemdpEnv::step(const Vec2& action_rel) {
  if (done_) throw std::logic_error("step on a finished episode");

  SemdpTransition tr;
  tr.s = obs_;
  tr.a_prime = Vec2(std::clamp(action_rel.x(), -params_.subgoal_range, params_.subgoal_range),
                    std::clamp(action_rel.y(), -params_.subgoal_range, params_.subgoal_range));

  const Vec2 robot = sim_.state().robot_pos;
  trajopt::TrajOptProblem problem;
  problem.start = robot;
  problem.subgoal = robot + tr.a_prime;
  problem.obstacles = sim_.planner_obstacle_estimates(params_.planner_noise_sd);
  problem.bounds = sim_.layout().bounds;
  problem.eps_prime = params_.eps_prime;
  problem.delta_init = params_.delta_init;
  problem.delta_smooth = params_.delta_smooth;
  problem.n_waypoints = params_.n_waypoints;
  problem.dt = params_.traj_dt;
  problem.lambda_init = params_.lambda_init;
  problem.lambda_growth = params_.lambda_growth;
  problem.lambda_max = params_.lambda_max;
  problem.max_inner_iters = params_.mode == trajopt::PlanMode::training
                                ? params_.train_inner_iters
                                : params_.infer_inner_iters;
  problem.max_outer_iters = params_.max_outer_iters;
  problem.clearance_tol = params_.clearance_tol;
  problem.obstacle_guard = params_.obstacle_guard;

  std::optional<trajopt::Trajectory> warm;
  if (warm_) warm = shift_for_warm_start(*warm_, warm_drop_);
  last_plan_ = trajopt::solve(problem, params_.mode, warm);

  // A best-effort plan is still executed; the simulator records any cost.
  follower::TrackerState tracker{0, params_.d_min};
  for (int i = 0; i < params_.k; ++i) {
    auto [action, next_tracker] =
        follower::follow_step(sim_.state().robot_pos, last_plan_.trajectory, tracker,
                              params_.sim.max_step);
    tracker = next_tracker;
    const sim::StepOutcome out = sim_.step(action);
    if (trace_) {
      trace_->actions.push_back(action);
      trace_->rows.push_back({out.next_state.step_count, out.next_state.robot_pos,
                              out.next_state.box_pos, out.reward, out.cost});
    }
    tr.r += out.reward;
    tr.c += out.cost;
    if (out.done) {
      done_ = true;
      success_ = out.success;
      break;
    }
  }
  warm_ = last_plan_.trajectory;
  warm_drop_ = tracker.tracking_index;

  obs_ = sim_.observe_now();
  tr.s_next = obs_;
  tr.done = done_;
  return tr;
}

sac::SacAgent<float> make_agent(const SemdpParams& params, const TrainOptions& opts) {
  sac::SacConfig<float> cfg;
  cfg.obs_dim = observation_dim(params.sim.lidar_bins);
  cfg.act_dim = 2;
  cfg.hidden = opts.hidden;
  cfg.lr = opts.lr;
  cfg.gamma = static_cast<float>(params.gamma);
  cfg.tau = opts.tau;
  cfg.action_scale = static_cast<float>(params.subgoal_range);
  Rng rng(seed_stream(opts.seed, 0xA6E17ULL));
  return sac::SacAgent<float>(cfg, rng);
}

TrainResult train(const SemdpParams& params, const TrainOptions& opts,
                  sac::SacAgent<float>& agent, const CheckpointSink& checkpoint) {
  SemdpParams train_params = params;
  train_params.mode = trajopt::PlanMode::training;

  ReplayBuffer buffer(opts.buffer_capacity);
  Rng action_rng(seed_stream(opts.seed, 0xAC7101ULL));
  Rng update_rng(seed_stream(opts.seed, 0x0BDA70ULL));

  TrainResult result;
  int64_t steps = 0;
  int64_t next_checkpoint = opts.checkpoint_interval;
  int episode = 0;

  while (steps < opts.budget) {
    const world::WorldLayout layout =
        world::sample_layout(seed_stream(opts.seed, 0x1A70000ULL + episode), opts.difficulty);
    SemdpEnv env(layout, train_params);
    env.reset(seed_stream(opts.seed, 0x2E50000ULL + episode));

    double ep_reward = 0.0;
    double ep_cost = 0.0;
    while (!env.done() && steps < opts.budget) {
      Vec2 action;
      if (steps < opts.warmup_steps) {
        action = Vec2(action_rng.uniform(-params.subgoal_range, params.subgoal_range),
                      action_rng.uniform(-params.subgoal_range, params.subgoal_range));
      } else {
        const std::vector<float> obs_feat = features<float>(env.observation());
        const std::vector<float> a = agent.act(obs_feat, false, action_rng);
        action = Vec2(a[0], a[1]);
      }
      SemdpTransition tr = env.step(action);
      ep_reward += tr.r;
      ep_cost += tr.c;
      buffer.push(std::move(tr));
      ++steps;

      if (steps > opts.warmup_steps &&
          buffer.size() >= static_cast<size_t>(opts.batch_size)) {
        for (int u = 0; u < opts.updates_per_step; ++u) {
          const sac::Batch<float> batch = buffer.sample_batch(opts.batch_size, update_rng);
          agent.update(batch, update_rng);
        }
      }
    }
    result.curve.push_back({steps, episode, ep_reward, ep_cost, env.success() ? 1 : 0});
    ++episode;

    if (checkpoint && opts.checkpoint_interval > 0 && steps >= next_checkpoint) {
      checkpoint(steps, agent);
      while (next_checkpoint <= steps) next_checkpoint += opts.checkpoint_interval;
    }
  }
  if (checkpoint) checkpoint(steps, agent);
  result.steps_run = steps;
  return result;
}

EvalResult evaluate(const Policy& policy, const std::vector<world::WorldLayout>& layouts,
                    const SemdpParams& params, uint64_t eval_seed,
                    std::vector<sim::EpisodeTrace>* traces) {
  const int n = static_cast<int>(layouts.size());
  EvalResult result;
  result.episodes.resize(n);
  if (traces) traces->assign(n, {});

  // Episodes are independent given the (const) policy; rows merge in episode
  // order so the fan-out is invisible in the output.
#pragma omp parallel for schedule(dynamic)
  for (int e = 0; e < n; ++e) {
    SemdpEnv env(layouts[e], params);
    if (traces) env.enable_trace(&(*traces)[e]);
    env.reset(seed_stream(eval_seed, 0xE7A1000ULL + e));
    double reward = 0.0;
    double cost = 0.0;
    while (!env.done()) {
      const SemdpTransition tr = env.step(policy(env.observation()));
      reward += tr.r;
      cost += tr.c;
    }
    result.episodes[e] = {e, env.success() ? 1 : 0, reward, cost};
  }

  for (const EvalEpisode& ep : result.episodes) {
    result.success_rate += ep.success;
    result.mean_reward += ep.reward;
    result.mean_cost += ep.cost;
  }
  if (n > 0) {
    result.success_rate /= n;
    result.mean_reward /= n;
    result.mean_cost /= n;
  }
  return result;
}

Policy greedy_policy(const sac::SacAgent<float>& agent) {
  return [&agent](const sim::Observation& obs) {
    Rng unused(0);
    const std::vector<float> a = agent.act(features<float>(obs), true, unused);
    return Vec2(a[0], a[1]);
  };
}

namespace {

template <typename T>
void append_pod(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::invalid_argument("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

constexpr uint64_t kCheckpointMagic = 0x53504b43503031ULL;  // "SPKCP01"

}  // namespace

std::string serialize_checkpoint(const sac::SacAgent<float>& agent,
                                 const std::string& config_text) {
  std::string out;
  append_pod(out, kCheckpointMagic);
  const sac::SacConfig<float>& cfg = agent.config();
  append_pod(out, static_cast<int32_t>(cfg.obs_dim));
  append_pod(out, static_cast<int32_t>(cfg.act_dim));
  append_pod(out, static_cast<int32_t>(cfg.hidden));
  append_pod(out, cfg.action_scale);
  append_pod(out, fnv1a64(config_text));
  append_pod(out, static_cast<uint64_t>(config_text.size()));
  out += config_text;
  const std::vector<double> params = agent.serialize_params();
  append_pod(out, static_cast<uint64_t>(params.size()));
  for (double p : params) append_pod(out, p);
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  size_t pos = 0;
  if (read_pod<uint64_t>(bytes, pos) != kCheckpointMagic)
    throw std::invalid_argument("not a checkpoint file (bad magic)");
  Checkpoint ck;
  ck.obs_dim = read_pod<int32_t>(bytes, pos);
  ck.act_dim = read_pod<int32_t>(bytes, pos);
  ck.hidden = read_pod<int32_t>(bytes, pos);
  ck.action_scale = read_pod<float>(bytes, pos);
  ck.config_hash = read_pod<uint64_t>(bytes, pos);
  const uint64_t text_len = read_pod<uint64_t>(bytes, pos);
  if (pos + text_len > bytes.size()) throw std::invalid_argument("truncated checkpoint");
  ck.config_text = bytes.substr(pos, text_len);
  pos += text_len;
  if (fnv1a64(ck.config_text) != ck.config_hash)
    throw std::invalid_argument("checkpoint config hash mismatch");
  const uint64_t count = read_pod<uint64_t>(bytes, pos);
  ck.params.resize(count);
  for (uint64_t i = 0; i < count; ++i) ck.params[i] = read_pod<double>(bytes, pos);
  if (pos != bytes.size()) throw std::invalid_argument("trailing bytes in checkpoint");
  return ck;
}

sac::SacAgent<float> agent_from_checkpoint(const Checkpoint& ck, float gamma, float tau,
                                           float lr) {
  sac::SacConfig<float> cfg;
  cfg.obs_dim = ck.obs_dim;
  cfg.act_dim = ck.act_dim;
  cfg.hidden = ck.hidden;
  cfg.action_scale = ck.action_scale;
  cfg.gamma = gamma;
  cfg.tau = tau;
  cfg.lr = lr;
  Rng rng(0);
  sac::SacAgent<float> agent(cfg, rng);
  agent.deserialize_params(ck.params);
  return agent;
}

}  // namespace safepush::semdp
