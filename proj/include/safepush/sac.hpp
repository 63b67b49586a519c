#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/mlp.hpp"

namespace safepush::sac {

template <typename T>
T softplus(T x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, T(0));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// log(1 - tanh(u)^2) without cancellation.
template <typename T>
T log_one_minus_tanh_sq(T u) {
  return T(2) * (T(M_LN2) - u - softplus(T(-2) * u));
}

template <typename T>
struct SacConfig {
  int obs_dim = 0;
  int act_dim = 2;
  int hidden = 256;
  T lr = T(3e-4);
  T gamma = T(0.99);
  T tau = T(0.005);
  T log_std_min = T(-20);
  T log_std_max = T(2);
  T action_scale = T(1);   // action = scale * tanh(u) + center, per dimension
  T action_center = T(0);
  T init_log_alpha = T(0);
  // target entropy defaults to -act_dim
};

/// Training batch; deliberately carries no cost field.
template <typename T>
struct Batch {
  int size = 0;
  std::vector<T> obs;       // size x obs_dim
  std::vector<T> act;       // size x act_dim
  std::vector<T> rew;       // size
  std::vector<T> obs_next;  // size x obs_dim
  std::vector<T> not_done;  // size, 1 = bootstrap, 0 = terminal
};

/// Reparameterization noise, drawn once per update so losses are pure
/// functions of the parameters given a batch.
template <typename T>
struct UpdateNoise {
  std::vector<T> next_xi;  // size x act_dim, for the target action
  std::vector<T> cur_xi;   // size x act_dim, for the actor loss action
};

template <typename T>
struct UpdateDiagnostics {
  T critic_loss = T(0);
  T actor_loss = T(0);
  T alpha_loss = T(0);
  T alpha = T(0);
  T mean_log_prob = T(0);
  bool rejected = false;
};

/// Soft actor-critic with twin critics, tanh-squashed Gaussian policy and
/// learned entropy temperature.
template <typename T>
class SacAgent {
 public:
  using Grads = mlp::MlpGrads<T>;

  SacAgent() = default;

  SacAgent(const SacConfig<T>& cfg, Rng& rng) : cfg_(cfg) {
    actor_.resize(cfg.obs_dim, cfg.hidden, 2 * cfg.act_dim);
    q1_.resize(cfg.obs_dim + cfg.act_dim, cfg.hidden, 1);
    q2_.resize(cfg.obs_dim + cfg.act_dim, cfg.hidden, 1);
    actor_.init(rng);
    q1_.init(rng);
    q2_.init(rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
    log_alpha_ = cfg.init_log_alpha;
    adam_actor_.init(actor_.param_count(), cfg.lr);
    adam_q1_.init(q1_.param_count(), cfg.lr);
    adam_q2_.init(q2_.param_count(), cfg.lr);
    target_entropy_ = -static_cast<T>(cfg.act_dim);
  }

  const SacConfig<T>& config() const { return cfg_; }
  T alpha() const { return std::exp(log_alpha_); }
  T log_alpha() const { return log_alpha_; }

  mlp::Mlp<T>& actor() { return actor_; }
  const mlp::Mlp<T>& actor_net() const { return actor_; }
  mlp::Mlp<T>& q1() { return q1_; }
  mlp::Mlp<T>& q2() { return q2_; }
  const mlp::Mlp<T>& q1_target() const { return q1_target_; }
  const mlp::Mlp<T>& q2_target() const { return q2_target_; }

  /// Squashed-Gaussian head evaluated on a batch of observations with given
  /// noise; fills actions and per-sample log-probabilities. Cached
  /// intermediates are returned for the analytic backward pass.
  struct PolicyEval {
    typename mlp::Mlp<T>::Tape tape;
    std::vector<T> head;     // batch x 2*act_dim raw outputs
    std::vector<T> u;        // pre-squash samples
    std::vector<T> tanh_u;
    std::vector<T> action;   // batch x act_dim, scaled
    std::vector<T> log_prob; // batch
  };

  void policy_eval(const T* obs, int batch, const T* xi, bool deterministic,
                   PolicyEval& out) const {
    const int a = cfg_.act_dim;
    out.head.resize(static_cast<size_t>(batch) * 2 * a);
    actor_.forward(obs, batch, out.tape, out.head.data());
    out.u.resize(static_cast<size_t>(batch) * a);
    out.tanh_u.resize(out.u.size());
    out.action.resize(out.u.size());
    out.log_prob.assign(batch, T(0));
    for (int i = 0; i < batch; ++i) {
      for (int d = 0; d < a; ++d) {
        const T mean = out.head[static_cast<size_t>(i) * 2 * a + d];
        const T ls_raw = out.head[static_cast<size_t>(i) * 2 * a + a + d];
        const T ls = std::clamp(ls_raw, cfg_.log_std_min, cfg_.log_std_max);
        const T sd = std::exp(ls);
        const T noise = deterministic ? T(0) : xi[static_cast<size_t>(i) * a + d];
        const T u = mean + sd * noise;
        const T t = std::tanh(u);
        const size_t j = static_cast<size_t>(i) * a + d;
        out.u[j] = u;
        out.tanh_u[j] = t;
        out.action[j] = cfg_.action_center + cfg_.action_scale * t;
        out.log_prob[i] += -T(0.5) * noise * noise - ls - T(0.5) * std::log(T(2) * T(M_PI)) -
                           log_one_minus_tanh_sq(u) - std::log(cfg_.action_scale);
      }
    }
  }

  /// Log-density of the squashed policy at pre-squash value u for a single
  /// (mean, log_std) pair; the quadrature test integrates its exponential.
  static T squashed_log_prob(T mean, T log_std, T u, T scale) {
    const T sd = std::exp(log_std);
    const T z = (u - mean) / sd;
    return -T(0.5) * z * z - log_std - T(0.5) * std::log(T(2) * T(M_PI)) -
           log_one_minus_tanh_sq(u) - std::log(scale);
  }

  /// Single-observation action. Stochastic mode draws act_dim normals from rng.
  std::vector<T> act(const std::vector<T>& obs, bool deterministic, Rng& rng,
                     T* log_prob = nullptr) const {
    std::vector<T> xi(cfg_.act_dim, T(0));
    if (!deterministic)
      for (T& v : xi) v = static_cast<T>(rng.normal());
    PolicyEval eval;
    policy_eval(obs.data(), 1, xi.data(), deterministic, eval);
    if (log_prob) *log_prob = eval.log_prob[0];
    return eval.action;
  }

  UpdateNoise<T> draw_noise(int batch, Rng& rng) const {
    UpdateNoise<T> noise;
    noise.next_xi.resize(static_cast<size_t>(batch) * cfg_.act_dim);
    noise.cur_xi.resize(noise.next_xi.size());
    for (T& v : noise.next_xi) v = static_cast<T>(rng.normal());
    for (T& v : noise.cur_xi) v = static_cast<T>(rng.normal());
    return noise;
  }

  /// Entropy-regularized TD targets y = r + gamma * not_done * (min Q_target - alpha log pi).
  std::vector<T> compute_targets(const Batch<T>& batch, const UpdateNoise<T>& noise) const {
    PolicyEval& next = work_.next_eval;
    policy_eval(batch.obs_next.data(), batch.size, noise.next_xi.data(), false, next);
    std::vector<T>& qin = work_.qin_next;
    concat_obs_act(batch.obs_next, next.action, batch.size, qin);
    work_.q1v.resize(batch.size);
    work_.q2v.resize(batch.size);
    // the twin target nets are independent: one per thread
#pragma omp parallel sections num_threads(2)
    {
#pragma omp section
      q1_target_.forward(qin.data(), batch.size, work_.tape1, work_.q1v.data());
#pragma omp section
      q2_target_.forward(qin.data(), batch.size, work_.tape2, work_.q2v.data());
    }
    const T alpha_v = alpha();
    std::vector<T> y(batch.size);
    for (int i = 0; i < batch.size; ++i) {
      const T qmin = std::min(work_.q1v[i], work_.q2v[i]);
      y[i] = batch.rew[i] + cfg_.gamma * batch.not_done[i] * (qmin - alpha_v * next.log_prob[i]);
    }
    return y;
  }

  /// MSE of both critics against fixed targets; grads are optional.
  T critic_loss_with_targets(const Batch<T>& batch, const std::vector<T>& y, Grads* g1,
                             Grads* g2) const {
    std::vector<T>& qin = work_.qin_cur;
    concat_obs_act(batch.obs, batch.act, batch.size, qin);
    work_.q1v.resize(batch.size);
    work_.q2v.resize(batch.size);
    work_.d1.resize(batch.size);
    work_.d2.resize(batch.size);
#pragma omp parallel sections num_threads(2)
    {
#pragma omp section
      q1_.forward(qin.data(), batch.size, work_.tape1, work_.q1v.data());
#pragma omp section
      q2_.forward(qin.data(), batch.size, work_.tape2, work_.q2v.data());
    }
    T loss = T(0);
    const T inv_b = T(1) / static_cast<T>(batch.size);
    for (int i = 0; i < batch.size; ++i) {
      const T e1 = work_.q1v[i] - y[i];
      const T e2 = work_.q2v[i] - y[i];
      loss += (e1 * e1 + e2 * e2) * inv_b;
      work_.d1[i] = T(2) * e1 * inv_b;
      work_.d2[i] = T(2) * e2 * inv_b;
    }
    if (g1 && g2) {
#pragma omp parallel sections num_threads(2)
      {
#pragma omp section
        q1_.backward(work_.tape1, work_.d1.data(), *g1, nullptr, &work_.ws1);
#pragma omp section
        q2_.backward(work_.tape2, work_.d2.data(), *g2, nullptr, &work_.ws2);
      }
    } else if (g1) {
      q1_.backward(work_.tape1, work_.d1.data(), *g1, nullptr, &work_.ws1);
    } else if (g2) {
      q2_.backward(work_.tape2, work_.d2.data(), *g2, nullptr, &work_.ws2);
    }
    return loss;
  }

  T critic_loss_and_grads(const Batch<T>& batch, const UpdateNoise<T>& noise, Grads* g1,
                          Grads* g2) const {
    return critic_loss_with_targets(batch, compute_targets(batch, noise), g1, g2);
  }

  /// Reparameterized policy loss mean(alpha * log pi - min Q); also reports the
  /// mean log-probability used by the temperature update.
  T actor_loss_and_grads(const Batch<T>& batch, const UpdateNoise<T>& noise, Grads* ga,
                         T* mean_log_prob) const {
    const int b = batch.size;
    const int a = cfg_.act_dim;
    PolicyEval& cur = work_.cur_eval;
    policy_eval(batch.obs.data(), b, noise.cur_xi.data(), false, cur);

    std::vector<T>& qin = work_.qin_pi;
    concat_obs_act(batch.obs, cur.action, b, qin);
    work_.q1v.resize(b);
    work_.q2v.resize(b);
#pragma omp parallel sections num_threads(2)
    {
#pragma omp section
      q1_.forward(qin.data(), b, work_.tape1, work_.q1v.data());
#pragma omp section
      q2_.forward(qin.data(), b, work_.tape2, work_.q2v.data());
    }

    const T alpha_v = alpha();
    const T inv_b = T(1) / static_cast<T>(b);
    T loss = T(0), mlp_sum = T(0);
    for (int i = 0; i < b; ++i) {
      loss += (alpha_v * cur.log_prob[i] - std::min(work_.q1v[i], work_.q2v[i])) * inv_b;
      mlp_sum += cur.log_prob[i] * inv_b;
    }
    if (mean_log_prob) *mean_log_prob = mlp_sum;
    if (!ga) return loss;

    // d loss / d action, through whichever critic realizes the min per sample
    work_.d1.assign(b, T(0));
    work_.d2.assign(b, T(0));
    for (int i = 0; i < b; ++i)
      (work_.q1v[i] <= work_.q2v[i] ? work_.d1[i] : work_.d2[i]) = -inv_b;
    const int qin_dim = cfg_.obs_dim + a;
    work_.dqin1.resize(static_cast<size_t>(b) * qin_dim);
    work_.dqin2.resize(work_.dqin1.size());
#pragma omp parallel sections num_threads(2)
    {
#pragma omp section
      q1_.backward_input_only(work_.tape1, work_.d1.data(), work_.dqin1.data(), &work_.ws1);
#pragma omp section
      q2_.backward_input_only(work_.tape2, work_.d2.data(), work_.dqin2.data(), &work_.ws2);
    }

    // assemble gradient w.r.t. the actor head (mean, raw log_std)
    std::vector<T>& dhead = work_.dhead;
    dhead.assign(static_cast<size_t>(b) * 2 * a, T(0));
    for (int i = 0; i < b; ++i) {
      for (int d = 0; d < a; ++d) {
        const size_t j = static_cast<size_t>(i) * a + d;
        const T da = work_.dqin1[static_cast<size_t>(i) * qin_dim + cfg_.obs_dim + d] +
                     work_.dqin2[static_cast<size_t>(i) * qin_dim + cfg_.obs_dim + d];
        const T t = cur.tanh_u[j];
        const T dlogp_du = T(2) * t;  // derivative of -log(1 - tanh^2)
        const T du = alpha_v * inv_b * dlogp_du + da * cfg_.action_scale * (T(1) - t * t);
        const T ls_raw = cur.head[static_cast<size_t>(i) * 2 * a + a + d];
        const bool clamped = ls_raw < cfg_.log_std_min || ls_raw > cfg_.log_std_max;
        const T ls = std::clamp(ls_raw, cfg_.log_std_min, cfg_.log_std_max);
        const T sd = std::exp(ls);
        const T xi = noise.cur_xi[j];
        T dls = alpha_v * inv_b * T(-1) + du * sd * xi;
        if (clamped) dls = T(0);
        dhead[static_cast<size_t>(i) * 2 * a + d] = du;
        dhead[static_cast<size_t>(i) * 2 * a + a + d] = dls;
      }
    }
    actor_.backward(cur.tape, dhead.data(), *ga, nullptr, &work_.wsa);
    return loss;
  }

  /// Temperature loss -log_alpha * (mean log pi + target entropy).
  T alpha_loss_and_grad(T mean_log_prob, T* dlog_alpha) const {
    const T err = mean_log_prob + target_entropy_;
    if (dlog_alpha) *dlog_alpha = -err;
    return -log_alpha_ * err;
  }

  void polyak_update(T tau) {
    auto mix = [tau](mlp::Mlp<T>& target, const mlp::Mlp<T>& online) {
      auto* tl = &target;
      const auto* ol = &online;
      std::array<std::pair<std::vector<T>*, const std::vector<T>*>, 6> pairs = {{
          {&tl->l1.w, &ol->l1.w}, {&tl->l1.b, &ol->l1.b}, {&tl->l2.w, &ol->l2.w},
          {&tl->l2.b, &ol->l2.b}, {&tl->l3.w, &ol->l3.w}, {&tl->l3.b, &ol->l3.b},
      }};
      for (auto& [t, o] : pairs)
        for (size_t i = 0; i < t->size(); ++i)
          (*t)[i] = (T(1) - tau) * (*t)[i] + tau * (*o)[i];
    };
    mix(q1_target_, q1_);
    mix(q2_target_, q2_);
  }

  /// One full update: all losses and gradients are computed at the current
  /// parameter snapshot, then applied. Non-finite losses reject the update.
  UpdateDiagnostics<T> update(const Batch<T>& batch, Rng& rng) {
    const UpdateNoise<T> noise = draw_noise(batch.size, rng);
    UpdateDiagnostics<T> diag;

    Grads g1, g2, ga;
    diag.critic_loss = critic_loss_and_grads(batch, noise, &g1, &g2);
    diag.actor_loss = actor_loss_and_grads(batch, noise, &ga, &diag.mean_log_prob);
    T dlog_alpha = T(0);
    diag.alpha_loss = alpha_loss_and_grad(diag.mean_log_prob, &dlog_alpha);
    diag.alpha = alpha();

    if (!std::isfinite(static_cast<double>(diag.critic_loss)) ||
        !std::isfinite(static_cast<double>(diag.actor_loss)) ||
        !std::isfinite(static_cast<double>(diag.alpha_loss))) {
      diag.rejected = true;
      return diag;
    }

    adam_q1_.step(q1_, g1);
    adam_q2_.step(q2_, g2);
    adam_actor_.step(actor_, ga);
    mlp::Adam<T>::scalar_step(log_alpha_, dlog_alpha, cfg_.lr, alpha_m_, alpha_v_, alpha_t_);
    polyak_update(cfg_.tau);
    return diag;
  }

  /// Flat parameter dump: actor, q1, q2, targets, log_alpha. Adam state is not
  /// part of a checkpoint.
  std::vector<double> serialize_params() const {
    std::vector<double> out;
    out.reserve(actor_.param_count() + 4 * q1_.param_count() + 1);
    for (const mlp::Mlp<T>* net : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_})
      net->for_each_param([&](const T& v) { out.push_back(static_cast<double>(v)); });
    out.push_back(static_cast<double>(log_alpha_));
    return out;
  }

  void deserialize_params(const std::vector<double>& flat) {
    size_t i = 0;
    for (mlp::Mlp<T>* net : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_})
      net->for_each_param([&](T& v) {
        if (i >= flat.size()) throw std::invalid_argument("parameter blob too short");
        v = static_cast<T>(flat[i++]);
      });
    if (i + 1 != flat.size()) throw std::invalid_argument("parameter blob size mismatch");
    log_alpha_ = static_cast<T>(flat[i]);
  }

  static void concat_obs_act(const std::vector<T>& obs, const std::vector<T>& act, int batch,
                             std::vector<T>& out) {
    const size_t od = obs.size() / batch;
    const size_t ad = act.size() / batch;
    out.resize(static_cast<size_t>(batch) * (od + ad));
    for (int i = 0; i < batch; ++i) {
      std::memcpy(out.data() + static_cast<size_t>(i) * (od + ad), obs.data() + i * od,
                  od * sizeof(T));
      std::memcpy(out.data() + static_cast<size_t>(i) * (od + ad) + od, act.data() + i * ad,
                  ad * sizeof(T));
    }
  }

 private:
  SacConfig<T> cfg_;
  mlp::Mlp<T> actor_, q1_, q2_, q1_target_, q2_target_;
  mlp::Adam<T> adam_actor_, adam_q1_, adam_q2_;
  T log_alpha_ = T(0);
  T alpha_m_ = T(0), alpha_v_ = T(0);
  int64_t alpha_t_ = 0;
  T target_entropy_ = T(-2);

  // Scratch reused across updates. Makes the loss/gradient methods non-reentrant;
  // act() stays self-contained and safe to call from parallel rollouts.
  struct UpdateWork {
    PolicyEval next_eval, cur_eval;
    typename mlp::Mlp<T>::Tape tape1, tape2;
    typename mlp::Mlp<T>::Workspace ws1, ws2, wsa;
    std::vector<T> qin_next, qin_cur, qin_pi, q1v, q2v, d1, d2, dqin1, dqin2, dhead;
  };
  mutable UpdateWork work_;
};

}  // namespace safepush::sac
