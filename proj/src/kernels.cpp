#include "safepush/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <vector>

namespace safepush::kernels {

namespace {

// Passive waiting keeps the second core available for the serial stretches
// between parallel regions; honored only if the user has not set a policy.
__attribute__((constructor)) void default_omp_wait_policy() {
  setenv("OMP_WAIT_POLICY", "passive", 0);
}

std::atomic<bool> g_parallel{true};

bool use_parallel(int64_t flops) { return g_parallel.load() && flops >= kParallelFlopThreshold; }

constexpr int kRowBlock = 4;  // output rows sharing one pass over the weights

// Per-block bodies. Kept noinline so the serial and the OpenMP drivers execute
// the exact same machine code, which makes the two paths bitwise equal. Each
// output element is accumulated in a fixed order regardless of thread count.

// Y rows [r0, r1) of Y = X * W (+ bias).
template <typename T>
__attribute__((noinline)) void forward_block(const T* x, int k, const T* w, int n, const T* bias,
                                             T* y, int r0, int r1) {
  for (int i = r0; i < r1; ++i) {
    T* yi = y + static_cast<int64_t>(i) * n;
    if (bias) {
      for (int j = 0; j < n; ++j) yi[j] = bias[j];
    } else {
      for (int j = 0; j < n; ++j) yi[j] = T(0);
    }
  }
  for (int kk = 0; kk < k; ++kk) {
    const T* wk = w + static_cast<int64_t>(kk) * n;
    for (int i = r0; i < r1; ++i) {
      const T xv = x[static_cast<int64_t>(i) * k + kk];
      T* yi = y + static_cast<int64_t>(i) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) yi[j] += xv * wk[j];
    }
  }
}

// DX rows [r0, r1) of DX = G * W^T, with WT = W transposed (n x k).
template <typename T>
__attribute__((noinline)) void backward_input_block(const T* g, int n, const T* wt, int k, T* dx,
                                                    int r0, int r1) {
  for (int i = r0; i < r1; ++i) {
    T* dxi = dx + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) dxi[kk] = T(0);
  }
  for (int j = 0; j < n; ++j) {
    const T* wtj = wt + static_cast<int64_t>(j) * k;
    for (int i = r0; i < r1; ++i) {
      const T gv = g[static_cast<int64_t>(i) * n + j];
      T* dxi = dx + static_cast<int64_t>(i) * k;
#pragma omp simd
      for (int kk = 0; kk < k; ++kk) dxi[kk] += gv * wtj[kk];
    }
  }
}

// DW rows [r0, r1) of DW = X^T * G.
template <typename T>
__attribute__((noinline)) void backward_weight_block(const T* x, int b, int k, const T* g, int n,
                                                     T* dw, int r0, int r1) {
  for (int kk = r0; kk < r1; ++kk) {
    T* dwk = dw + static_cast<int64_t>(kk) * n;
    for (int j = 0; j < n; ++j) dwk[j] = T(0);
  }
  for (int i = 0; i < b; ++i) {
    const T* gi = g + static_cast<int64_t>(i) * n;
    const T* xi = x + static_cast<int64_t>(i) * k;
    for (int kk = r0; kk < r1; ++kk) {
      const T xv = xi[kk];
      T* dwk = dw + static_cast<int64_t>(kk) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) dwk[j] += xv * gi[j];
    }
  }
}

// Dispatch block index ranges either serially or across threads; the block
// body is shared, so the arithmetic per output element is identical.
template <typename Fn>
void run_blocks(int rows, bool parallel, const Fn& block_fn) {
  const int blocks = (rows + kRowBlock - 1) / kRowBlock;
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < blocks; ++bi)
      block_fn(bi * kRowBlock, std::min(rows, (bi + 1) * kRowBlock));
  } else {
    for (int bi = 0; bi < blocks; ++bi)
      block_fn(bi * kRowBlock, std::min(rows, (bi + 1) * kRowBlock));
  }
}

}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

template <typename T>
void linear_forward(const T* x, int b, int k, const T* w, int n, const T* bias, T* y) {
  run_blocks(b, use_parallel(static_cast<int64_t>(b) * k * n),
             [=](int r0, int r1) { forward_block(x, k, w, n, bias, y, r0, r1); });
}

template <typename T>
void linear_backward_input(const T* g, int b, int n, const T* w, int k, T* dx) {
  // transpose once so the inner loops stream contiguously
  std::vector<T> wt(static_cast<size_t>(n) * k);
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < n; ++j) wt[static_cast<size_t>(j) * k + kk] = w[static_cast<size_t>(kk) * n + j];
  const T* wtp = wt.data();
  run_blocks(b, use_parallel(static_cast<int64_t>(b) * k * n),
             [=](int r0, int r1) { backward_input_block(g, n, wtp, k, dx, r0, r1); });
}

template <typename T>
void linear_backward_weight(const T* x, int b, int k, const T* g, int n, T* dw) {
  run_blocks(k, use_parallel(static_cast<int64_t>(b) * k * n),
             [=](int r0, int r1) { backward_weight_block(x, b, k, g, n, dw, r0, r1); });
}

template <typename T>
void bias_backward(const T* g, int b, int n, T* db) {
  for (int j = 0; j < n; ++j) db[j] = T(0);
  for (int i = 0; i < b; ++i) {
    const T* gi = g + static_cast<int64_t>(i) * n;
#pragma omp simd
    for (int j = 0; j < n; ++j) db[j] += gi[j];
  }
}

template <typename T>
void relu_forward(const T* x, int64_t len, T* y) {
  for (int64_t i = 0; i < len; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, int64_t len, T* dx) {
  for (int64_t i = 0; i < len; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

#define SAFEPUSH_INSTANTIATE(T)                                                            \
  template void linear_forward<T>(const T*, int, int, const T*, int, const T*, T*);        \
  template void linear_backward_input<T>(const T*, int, int, const T*, int, T*);           \
  template void linear_backward_weight<T>(const T*, int, int, const T*, int, T*);          \
  template void bias_backward<T>(const T*, int, int, T*);                                  \
  template void relu_forward<T>(const T*, int64_t, T*);                                    \
  template void relu_backward<T>(const T*, const T*, int64_t, T*);

SAFEPUSH_INSTANTIATE(float)
SAFEPUSH_INSTANTIATE(double)
#undef SAFEPUSH_INSTANTIATE

}  // namespace safepush::kernels
