#include <algorithm>

#include "xeml/kernels.hpp"

namespace xeml::kernels {
namespace {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    if (beta == 0.0f) {
      std::fill(crow, crow + n, 0.0f);
    } else if (beta != 1.0f) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const float av = alpha * (trans_a ? a[p * lda + i] : a[i * lda + p]);
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      } else {
        const float* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu_forward(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] < 0.0f ? 0.0f : x[i];
}

void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

void affine(std::size_t n, const float* x, float scale, float shift, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale + shift;
}

void moments(std::size_t n, const float* x, double* sum, double* sum_sq) {
  double s = 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    s += v;
    ss += v * v;
  }
  *sum += s;
  *sum_sq += ss;
}

float squared_distance(std::size_t n, const float* a, const float* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<float>(acc);
}

double dot(std::size_t n, const float* a, const float* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double sum(std::size_t n, const float* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar", gemm,   axpy,    relu_forward, relu_backward,
                                 affine,   moments, squared_distance, dot,
                                 sum};
  return table;
}

}  // namespace xeml::kernels
