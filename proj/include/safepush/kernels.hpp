#pragma once

#include <cstdint>

namespace safepush::kernels {

/// Global switch between the OpenMP kernels and the serial reference path.
/// Both paths run the same per-output-element code in the same order, so
/// results are bitwise identical; the tests assert exactly that.
void set_parallel(bool enabled);
bool parallel_enabled();

/// Work sizes below this many multiply-adds stay serial even in parallel mode
/// (thread launch would dominate, and it keeps nested parallel regions quiet).
inline constexpr int64_t kParallelFlopThreshold = 1 << 21;

// Dense layer kernels over row-major storage. Shapes:
//   X: B x K, W: K x N, Y/G: B x N, DW: K x N, DX: B x K, bias/db: N

/// Y = X * W (+ bias when non-null).
template <typename T>
void linear_forward(const T* x, int b, int k, const T* w, int n, const T* bias, T* y);

/// DX = G * W^T.
template <typename T>
void linear_backward_input(const T* g, int b, int n, const T* w, int k, T* dx);

/// DW = X^T * G, accumulated per output row in a fixed order.
template <typename T>
void linear_backward_weight(const T* x, int b, int k, const T* g, int n, T* dw);

/// db = column sums of G.
template <typename T>
void bias_backward(const T* g, int b, int n, T* db);

/// y = max(x, 0), elementwise over len values.
template <typename T>
void relu_forward(const T* x, int64_t len, T* y);

/// dx = dy where the forward input was positive, else 0.
template <typename T>
void relu_backward(const T* x, const T* dy, int64_t len, T* dx);

}  // namespace safepush::kernels
