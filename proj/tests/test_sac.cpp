#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "safepush/sac.hpp"

using namespace safepush;
using namespace safepush::sac;

namespace {

SacConfig<double> tiny_config(int obs_dim = 6, int hidden = 8) {
  SacConfig<double> cfg;
  cfg.obs_dim = obs_dim;
  cfg.act_dim = 2;
  cfg.hidden = hidden;
  cfg.action_scale = 1.0;
  return cfg;
}

Batch<double> random_batch(int size, int obs_dim, int act_dim, Rng& rng) {
  Batch<double> b;
  b.size = size;
  b.obs.resize(static_cast<size_t>(size) * obs_dim);
  b.obs_next.resize(b.obs.size());
  b.act.resize(static_cast<size_t>(size) * act_dim);
  b.rew.resize(size);
  b.not_done.resize(size);
  for (double& v : b.obs) v = rng.uniform(-1, 1);
  for (double& v : b.obs_next) v = rng.uniform(-1, 1);
  for (double& v : b.act) v = rng.uniform(-0.9, 0.9);
  for (double& v : b.rew) v = rng.uniform(-1, 1);
  for (size_t i = 0; i < b.not_done.size(); ++i) b.not_done[i] = rng.uniform01() < 0.8 ? 1.0 : 0.0;
  return b;
}

// Visit all parameters of one network as a flat list of pointers.
template <typename T>
std::vector<T*> param_ptrs(mlp::Mlp<T>& net) {
  std::vector<T*> out;
  net.for_each_param([&](T& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<T> grad_values(const mlp::MlpGrads<T>& g) {
  std::vector<T> out;
  g.for_each([&](const T& v) { out.push_back(v); });
  return out;
}

}  // namespace

TEST_CASE("zero parameters squash to the action-space center") {
  SacConfig<double> cfg = tiny_config();
  cfg.action_center = 0.25;
  cfg.action_scale = 0.5;
  Rng rng(1);
  SacAgent<double> agent(cfg, rng);
  agent.actor().for_each_param([](double& p) { p = 0.0; });
  Rng act_rng(2);
  const std::vector<double> action = agent.act(std::vector<double>(cfg.obs_dim, 0.3), true, act_rng);
  CHECK(action[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(action[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("sampled actions always stay inside the range") {
  SacConfig<double> cfg = tiny_config();
  cfg.action_scale = 1.0;
  Rng rng(3);
  SacAgent<double> agent(cfg, rng);
  Rng act_rng(4);
  std::vector<double> obs(cfg.obs_dim);
  for (int draw = 0; draw < 10000; ++draw) {
    for (double& v : obs) v = act_rng.uniform(-2, 2);
    const std::vector<double> a = agent.act(obs, false, act_rng);
    for (double v : a) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("squashed density integrates to one") {
  // 1-D slice: integrate p(a) over the action interval by mapping through u
  for (auto [mean, log_std, scale] : {std::tuple{0.3, -0.5, 1.0}, {-0.8, 0.2, 0.5}}) {
    const int steps = 200000;
    const double lo = -12.0, hi = 12.0;
    const double du = (hi - lo) / steps;
    double integral = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double u = lo + i * du;
      const double t = std::tanh(u);
      const double da_du = scale * (1.0 - t * t);
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;  // trapezoid
      integral += w * std::exp(SacAgent<double>::squashed_log_prob(mean, log_std, u, scale)) *
                  da_du * du;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("tau = 1 copies the online critics into the targets") {
  Rng rng(5);
  SacAgent<double> agent(tiny_config(), rng);
  // push the online critics away from the targets first
  agent.q1().for_each_param([&](double& p) { p += 0.1; });
  agent.polyak_update(1.0);
  std::vector<double> online, target;
  agent.q1().for_each_param([&](double& p) { online.push_back(p); });
  agent.q1_target().for_each_param([&](const double& p) { target.push_back(p); });
  CHECK(online == target);
}

TEST_CASE("critic loss vanishes when targets equal current predictions") {
  Rng rng(7);
  SacConfig<double> cfg = tiny_config();
  SacAgent<double> agent(cfg, rng);
  Batch<double> batch = random_batch(4, cfg.obs_dim, cfg.act_dim, rng);

  // evaluate the current critics, then use those values as targets
  std::vector<double> qin;
  SacAgent<double>::concat_obs_act(batch.obs, batch.act, batch.size, qin);
  mlp::Mlp<double>::Tape tape;
  std::vector<double> q1v(batch.size), q2v(batch.size);
  agent.q1().forward(qin.data(), batch.size, tape, q1v.data());
  agent.q2().forward(qin.data(), batch.size, tape, q2v.data());
  // min over critics is not used here: per-critic targets must match exactly,
  // so pick q1's values and check only its half of the loss via a trick: set
  // q2 = q1 so both halves vanish.
  agent.q2() = agent.q1();
  const double loss = agent.critic_loss_with_targets(batch, q1v, nullptr, nullptr);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(11);
  SacConfig<double> cfg = tiny_config(5, 8);
  SacAgent<double> agent(cfg, rng);
  Batch<double> batch = random_batch(2, cfg.obs_dim, cfg.act_dim, rng);
  const UpdateNoise<double> noise = agent.draw_noise(batch.size, rng);
  const double h = 1e-6;
  const double tol = 1e-4;

  auto check_grad = [&](mlp::Mlp<double>& net, const std::vector<double>& analytic,
                        auto&& loss_fn) {
    const std::vector<double*> ps = param_ptrs(net);
    REQUIRE(ps.size() == analytic.size());
    for (size_t i = 0; i < ps.size(); ++i) {
      const double saved = *ps[i];
      *ps[i] = saved + h;
      const double up = loss_fn();
      *ps[i] = saved - h;
      const double down = loss_fn();
      *ps[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
      CHECK(std::abs(fd - analytic[i]) / denom < tol);
    }
  };

  SUBCASE("critic gradients") {
    mlp::MlpGrads<double> g1, g2;
    agent.critic_loss_and_grads(batch, noise, &g1, &g2);
    auto critic_loss = [&] { return agent.critic_loss_and_grads(batch, noise, nullptr, nullptr); };
    check_grad(agent.q1(), grad_values(g1), critic_loss);
    check_grad(agent.q2(), grad_values(g2), critic_loss);
  }

  SUBCASE("actor gradients") {
    mlp::MlpGrads<double> ga;
    agent.actor_loss_and_grads(batch, noise, &ga, nullptr);
    auto actor_loss = [&] { return agent.actor_loss_and_grads(batch, noise, nullptr, nullptr); };
    check_grad(agent.actor(), grad_values(ga), actor_loss);
  }

  SUBCASE("temperature gradient") {
    double mean_logp = 0.0;
    agent.actor_loss_and_grads(batch, noise, nullptr, &mean_logp);
    double dla = 0.0;
    agent.alpha_loss_and_grad(mean_logp, &dla);
    // alpha loss is linear in log_alpha, so FD is exact
    const double l1 = -(agent.log_alpha() + h) * (mean_logp - 2.0);
    const double l0 = -(agent.log_alpha() - h) * (mean_logp - 2.0);
    CHECK(std::abs((l1 - l0) / (2 * h) - dla) < tol);
  }
}

TEST_CASE("non-finite batches reject the update and leave parameters alone") {
  Rng rng(13);
  SacConfig<double> cfg = tiny_config();
  SacAgent<double> agent(cfg, rng);
  Batch<double> batch = random_batch(4, cfg.obs_dim, cfg.act_dim, rng);
  batch.rew[1] = std::numeric_limits<double>::infinity();
  const std::vector<double> before = agent.serialize_params();
  const UpdateDiagnostics<double> diag = agent.update(batch, rng);
  CHECK(diag.rejected);
  CHECK(agent.serialize_params() == before);
}

TEST_CASE("updates run and keep parameters finite") {
  Rng rng(17);
  SacConfig<double> cfg = tiny_config();
  SacAgent<double> agent(cfg, rng);
  for (int step = 0; step < 50; ++step) {
    Batch<double> batch = random_batch(8, cfg.obs_dim, cfg.act_dim, rng);
    const UpdateDiagnostics<double> diag = agent.update(batch, rng);
    CHECK_FALSE(diag.rejected);
  }
  for (double p : agent.serialize_params()) CHECK(std::isfinite(p));
}

TEST_CASE("parameter serialization round-trips") {
  Rng rng(19);
  SacConfig<double> cfg = tiny_config();
  SacAgent<double> a(cfg, rng);
  Rng rng2(23);
  SacAgent<double> b(cfg, rng2);
  b.deserialize_params(a.serialize_params());
  CHECK(b.serialize_params() == a.serialize_params());
}
