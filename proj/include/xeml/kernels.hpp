#pragma once

#include <cstddef>
#include <string_view>

namespace xeml::kernels {

/// Row-major single-precision GEMM:
///   C[M,N] = alpha * op(A)[M,K] * op(B)[K,N] + beta * C
/// where op(X) is X or X^T according to the transpose flag. With beta == 0
/// the prior contents of C are ignored (NaNs included).
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                        float alpha, const float* a, std::size_t lda, const float* b,
                        std::size_t ldb, float beta, float* c, std::size_t ldc);

/// y += alpha * x
using AxpyFn = void (*)(std::size_t n, float alpha, const float* x, float* y);

/// y = max(x, 0); NaN inputs propagate.
using ReluForwardFn = void (*)(std::size_t n, const float* x, float* y);

/// gx += gy where x > 0
using ReluBackwardFn = void (*)(std::size_t n, const float* x, const float* gy, float* gx);

/// y = x * scale + shift
using AffineFn = void (*)(std::size_t n, const float* x, float scale, float shift, float* y);

/// Accumulates sum(x) and sum(x*x) in double precision.
using MomentsFn = void (*)(std::size_t n, const float* x, double* sum, double* sum_sq);

/// sum((a - b)^2) accumulated in double precision, rounded once.
using SquaredDistanceFn = float (*)(std::size_t n, const float* a, const float* b);

/// sum(a * b) accumulated in double precision.
using DotFn = double (*)(std::size_t n, const float* a, const float* b);

/// sum(x) accumulated in double precision.
using SumFn = double (*)(std::size_t n, const float* x);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  AxpyFn axpy;
  ReluForwardFn relu_forward;
  ReluBackwardFn relu_backward;
  AffineFn affine;
  MomentsFn moments;
  SquaredDistanceFn squared_distance;
  DotFn dot;
  SumFn sum;
};

/// Portable reference implementations; always available.
const KernelTable& scalar();

/// AVX2+FMA variants, or nullptr when not compiled in or not supported by the CPU.
const KernelTable* avx2();

/// Table used by the tensor ops. Chosen once: the best supported variant,
/// unless XEML_KERNELS=scalar is set in the environment.
const KernelTable& active();

/// Flushes subnormal floats to zero on the calling thread while alive
/// (x86 FTZ/DAZ, AArch64 FZ). Restores the previous mode on destruction.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned long long saved_ = 0;
};

}  // namespace xeml::kernels
