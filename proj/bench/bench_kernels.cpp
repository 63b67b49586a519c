// Times the serial reference against the OpenMP path on the dense-layer
// kernels at the shapes the learner actually runs (batch 256, hidden 256).

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/kernels.hpp"

using safepush::Rng;
namespace k = safepush::kernels;

namespace {

template <typename Fn>
double time_ms(int reps, const Fn& fn) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<float>& v, Rng& rng) {
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
}

void bench_shape(int b, int kk, int n, int reps) {
  Rng rng(42);
  std::vector<float> x(static_cast<size_t>(b) * kk), w(static_cast<size_t>(kk) * n), bias(n);
  std::vector<float> y(static_cast<size_t>(b) * n), g(y.size());
  std::vector<float> dx(x.size()), dw(w.size());
  fill(x, rng);
  fill(w, rng);
  fill(bias, rng);
  fill(g, rng);

  const double gflop = 2.0 * b * kk * n * 1e-9;
  struct Row {
    const char* name;
    std::function<void()> fn;
  };
  const Row rows[] = {
      {"forward", [&] { k::linear_forward(x.data(), b, kk, w.data(), n, bias.data(), y.data()); }},
      {"backward_input",
       [&] { k::linear_backward_input(g.data(), b, n, w.data(), kk, dx.data()); }},
      {"backward_weight",
       [&] { k::linear_backward_weight(x.data(), b, kk, g.data(), n, dw.data()); }},
  };

  std::printf("shape B=%d K=%d N=%d\n", b, kk, n);
  for (const Row& row : rows) {
    k::set_parallel(false);
    const double serial = time_ms(reps, row.fn);
    k::set_parallel(true);
    const double parallel = time_ms(reps, row.fn);
    std::printf("  %-16s serial %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   x%.2f\n",
                row.name, serial, gflop / serial * 1e3, parallel, gflop / parallel * 1e3,
                serial / parallel);
  }
  k::set_parallel(true);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  bench_shape(256, 68, 256, 200);
  bench_shape(256, 256, 256, 200);
  bench_shape(256, 256, 4, 500);
  return 0;
}
