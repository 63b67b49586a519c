#pragma once

#include <cstdint>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/kernels.hpp"

namespace safepush::mlp {

template <typename T>
struct DenseLayer {
  int in = 0, out = 0;
  std::vector<T> w;  // in x out, row-major
  std::vector<T> b;  // out

  void resize(int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<size_t>(in) * out, T(0));
    b.assign(out, T(0));
  }
};

template <typename T>
struct MlpGrads;

/// Three affine layers with ReLU between them; the output layer is linear.
template <typename T>
struct Mlp {
  DenseLayer<T> l1, l2, l3;

  void resize(int in, int hidden, int out) {
    l1.resize(in, hidden);
    l2.resize(hidden, hidden);
    l3.resize(hidden, out);
  }

  int in_dim() const { return l1.in; }
  int out_dim() const { return l3.out; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
  void init(Rng& rng) {
    for (DenseLayer<T>* l : {&l1, &l2, &l3}) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l->in));
      for (T& v : l->w) v = static_cast<T>(rng.uniform(-bound, bound));
      for (T& v : l->b) v = static_cast<T>(rng.uniform(-bound, bound));
    }
  }

  /// Activations cached by forward() for the matching backward() call.
  struct Tape {
    int batch = 0;
    std::vector<T> x, z1, a1, z2, a2;
  };

  /// y must hold batch*out_dim values.
  void forward(const T* x, int batch, Tape& tape, T* y) const {
    namespace k = safepush::kernels;
    tape.batch = batch;
    tape.x.assign(x, x + static_cast<size_t>(batch) * l1.in);
    tape.z1.resize(static_cast<size_t>(batch) * l1.out);
    tape.a1.resize(tape.z1.size());
    tape.z2.resize(static_cast<size_t>(batch) * l2.out);
    tape.a2.resize(tape.z2.size());
    k::linear_forward(x, batch, l1.in, l1.w.data(), l1.out, l1.b.data(), tape.z1.data());
    k::relu_forward(tape.z1.data(), static_cast<int64_t>(tape.z1.size()), tape.a1.data());
    k::linear_forward(tape.a1.data(), batch, l2.in, l2.w.data(), l2.out, l2.b.data(),
                      tape.z2.data());
    k::relu_forward(tape.z2.data(), static_cast<int64_t>(tape.z2.size()), tape.a2.data());
    k::linear_forward(tape.a2.data(), batch, l3.in, l3.w.data(), l3.out, l3.b.data(), y);
  }

  /// Scratch for the backward passes; reuse across calls to avoid reallocating
  /// megabyte-scale buffers in the training loop.
  struct Workspace {
    std::vector<T> da2, dz2, da1, dz1;

    void fit(const Mlp& net, int batch) {
      da2.resize(static_cast<size_t>(batch) * net.l3.in);
      dz2.resize(da2.size());
      da1.resize(static_cast<size_t>(batch) * net.l2.in);
      dz1.resize(da1.size());
    }
  };

  /// Accumulates nothing: grads are overwritten. dx (batch x in) is optional.
  void backward(const Tape& tape, const T* dy, MlpGrads<T>& grads, T* dx = nullptr,
                Workspace* ws = nullptr) const {
    namespace k = safepush::kernels;
    Workspace local;
    Workspace& w = ws ? *ws : local;
    w.fit(*this, tape.batch);
    const int batch = tape.batch;
    grads.resize_like(*this);

    k::linear_backward_weight(tape.a2.data(), batch, l3.in, dy, l3.out, grads.w3.data());
    k::bias_backward(dy, batch, l3.out, grads.b3.data());
    k::linear_backward_input(dy, batch, l3.out, l3.w.data(), l3.in, w.da2.data());

    k::relu_backward(tape.z2.data(), w.da2.data(), static_cast<int64_t>(w.da2.size()),
                     w.dz2.data());
    k::linear_backward_weight(tape.a1.data(), batch, l2.in, w.dz2.data(), l2.out,
                              grads.w2.data());
    k::bias_backward(w.dz2.data(), batch, l2.out, grads.b2.data());
    k::linear_backward_input(w.dz2.data(), batch, l2.out, l2.w.data(), l2.in, w.da1.data());

    k::relu_backward(tape.z1.data(), w.da1.data(), static_cast<int64_t>(w.da1.size()),
                     w.dz1.data());
    k::linear_backward_weight(tape.x.data(), batch, l1.in, w.dz1.data(), l1.out,
                              grads.w1.data());
    k::bias_backward(w.dz1.data(), batch, l1.out, grads.b1.data());
    if (dx) k::linear_backward_input(w.dz1.data(), batch, l1.out, l1.w.data(), l1.in, dx);
  }

  /// dx only, no weight gradients; for backpropagating through a frozen net.
  void backward_input_only(const Tape& tape, const T* dy, T* dx, Workspace* ws = nullptr) const {
    namespace k = safepush::kernels;
    Workspace local;
    Workspace& w = ws ? *ws : local;
    w.fit(*this, tape.batch);
    const int batch = tape.batch;
    k::linear_backward_input(dy, batch, l3.out, l3.w.data(), l3.in, w.da2.data());
    k::relu_backward(tape.z2.data(), w.da2.data(), static_cast<int64_t>(w.da2.size()),
                     w.dz2.data());
    k::linear_backward_input(w.dz2.data(), batch, l2.out, l2.w.data(), l2.in, w.da1.data());
    k::relu_backward(tape.z1.data(), w.da1.data(), static_cast<int64_t>(w.da1.size()),
                     w.dz1.data());
    k::linear_backward_input(w.dz1.data(), batch, l1.out, l1.w.data(), l1.in, dx);
  }

  size_t param_count() const {
    return l1.w.size() + l1.b.size() + l2.w.size() + l2.b.size() + l3.w.size() + l3.b.size();
  }

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (DenseLayer<T>* l : {&l1, &l2, &l3}) {
      for (T& v : l->w) fn(v);
      for (T& v : l->b) fn(v);
    }
  }

  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    for (const DenseLayer<T>* l : {&l1, &l2, &l3}) {
      for (const T& v : l->w) fn(v);
      for (const T& v : l->b) fn(v);
    }
  }
};

template <typename T>
struct MlpGrads {
  std::vector<T> w1, b1, w2, b2, w3, b3;

  void resize_like(const Mlp<T>& net) {
    w1.resize(net.l1.w.size());
    b1.resize(net.l1.b.size());
    w2.resize(net.l2.w.size());
    b2.resize(net.l2.b.size());
    w3.resize(net.l3.w.size());
    b3.resize(net.l3.b.size());
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const std::vector<T>* v : {&w1, &b1, &w2, &b2, &w3, &b3})
      for (const T& g : *v) fn(g);
  }
};

/// Adam over one Mlp's flattened parameters.
template <typename T>
class Adam {
 public:
  void init(size_t params, T lr) {
    lr_ = lr;
    m_.assign(params, T(0));
    v_.assign(params, T(0));
    t_ = 0;
  }

  /// net params and grads are visited in the same flat order.
  void step(Mlp<T>& net, const MlpGrads<T>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(0.9, t_);
    const double bc2 = 1.0 - std::pow(0.999, t_);
    size_t i = 0;
    std::vector<const std::vector<T>*> gs = {&grads.w1, &grads.b1, &grads.w2,
                                             &grads.b2, &grads.w3, &grads.b3};
    size_t gi = 0, gj = 0;
    net.for_each_param([&](T& p) {
      const T g = (*gs[gi])[gj];
      if (++gj == gs[gi]->size()) { ++gi; gj = 0; }
      m_[i] = T(0.9) * m_[i] + T(0.1) * g;
      v_[i] = T(0.999) * v_[i] + T(0.001) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      p -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + 1e-8));
      ++i;
    });
  }

  /// Scalar-parameter variant (used for the entropy temperature).
  static void scalar_step(T& p, T g, T lr, T& m, T& v, int64_t& t) {
    ++t;
    m = T(0.9) * m + T(0.1) * g;
    v = T(0.999) * v + T(0.001) * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    p -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + 1e-8));
  }

 private:
  T lr_ = T(3e-4);
  std::vector<T> m_, v_;
  int64_t t_ = 0;
};

}  // namespace safepush::mlp
