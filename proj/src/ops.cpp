#include "xeml/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <utility>

#include "xeml/errors.hpp"
#include "xeml/kernels.hpp"

namespace xeml::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " +
                         (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

// Writes the 3x3/pad-1 patch matrix of one image: cols[(ci*9 + ky*3 + kx), y*W + x].
void im2col(const float* image, std::size_t channels, std::size_t h, std::size_t w, float* cols) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const float* plane = image + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          float* dst = row + y * w;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * w;
          // x range whose source column x+dx lies inside [0, w)
          const std::size_t x_begin = dx < 0 ? 1 : 0;
          const std::size_t x_end = dx > 0 ? (w > 0 ? w - 1 : 0) : w;
          if (x_begin > 0) dst[0] = 0.0f;
          if (x_end < w) dst[w - 1] = 0.0f;
          if (x_end > x_begin) {
            std::memcpy(dst + x_begin, src + static_cast<long>(x_begin) + dx,
                        (x_end - x_begin) * sizeof(float));
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the image gradient.
void col2im_add(const float* cols, std::size_t channels, std::size_t h, std::size_t w,
                float* image_grad) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    float* plane = image_grad + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = cols + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const float* src = row + y * w;
          float* dst = plane + static_cast<std::size_t>(sy) * w;
          const std::size_t x_begin = dx < 0 ? 1 : 0;
          const std::size_t x_end = dx > 0 ? (w > 0 ? w - 1 : 0) : w;
          for (std::size_t x = x_begin; x < x_end; ++x) {
            dst[static_cast<long>(x) + dx] += src[x];
          }
        }
      }
    }
  }
}

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> inv_std;
};

ChannelStats batch_moments(const Tensor& input, std::vector<double>* unbiased_var) {
  const std::size_t b = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const double n = static_cast<double>(b * hw);
  const float* x = input.data().data();
  ChannelStats st{std::vector<float>(c), std::vector<float>(c)};
  if (unbiased_var) unbiased_var->assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0, ss = 0.0;
    for (std::size_t bi = 0; bi < b; ++bi) K().moments(hw, x + (bi * c + ch) * hw, &s, &ss);
    const double mean = s / n;
    const double var = std::max(0.0, ss / n - mean * mean);
    st.mean[ch] = static_cast<float>(mean);
    st.inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + kBatchNormEpsilon));
    if (unbiased_var) (*unbiased_var)[ch] = n > 1.0 ? var * n / (n - 1.0) : var;
  }
  return st;
}

Tensor batchnorm_impl(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                      const ChannelStats& st, bool batch_statistics, Tape* tape) {
  const std::size_t b = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor out = Tensor::uninitialized(input.shape());
  const float* x = input.data().data();
  float* y = out.mutable_data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float scale = gamma[ch] * st.inv_std[ch];
    const float shift = beta[ch] - st.mean[ch] * scale;
    for (std::size_t bi = 0; bi < b; ++bi) {
      const std::size_t off = (bi * c + ch) * hw;
      K().affine(hw, x + off, scale, shift, y + off);
    }
  }

  if (tape && tape->wants({input, gamma, beta})) {
    tape->record({input, gamma, beta}, out,
                 [input, gamma, beta, out, st, batch_statistics, b, c, hw]() mutable {
      const float* x = input.data().data();
      const float* gy = out.grad().data();
      const double n = static_cast<double>(b * hw);
      float* gx = input.requires_grad() ? input.grad_storage().data() : nullptr;
      float* gg = gamma.requires_grad() ? gamma.grad_storage().data() : nullptr;
      float* gb = beta.requires_grad() ? beta.grad_storage().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double mean = st.mean[ch];
        const double inv_std = st.inv_std[ch];
        double sum_gy = 0.0, sum_gy_x = 0.0;
        for (std::size_t bi = 0; bi < b; ++bi) {
          const std::size_t off = (bi * c + ch) * hw;
          sum_gy += K().sum(hw, gy + off);
          sum_gy_x += K().dot(hw, gy + off, x + off);
        }
        const double sum_gy_xhat = inv_std * (sum_gy_x - mean * sum_gy);
        if (gg) gg[ch] += static_cast<float>(sum_gy_xhat);
        if (gb) gb[ch] += static_cast<float>(sum_gy);
        if (!gx) continue;
        const double g = gamma[ch];
        // dx = a*gy + k*x + c0, folding xhat = (x - mean) * inv_std
        const float a = static_cast<float>(g * inv_std);
        float k = 0.0f, c0 = 0.0f;
        if (batch_statistics) {
          const double kd = -g * inv_std * inv_std * sum_gy_xhat / n;
          k = static_cast<float>(kd);
          c0 = static_cast<float>(-g * inv_std * sum_gy / n - kd * mean);
        }
        for (std::size_t bi = 0; bi < b; ++bi) {
          const std::size_t off = (bi * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            gx[off + i] += a * gy[off + i] + k * x[off + i] + c0;
          }
        }
      }
    });
  }
  return out;
}

void check_batchnorm_args(const Tensor& input, const Tensor& gamma, const Tensor& beta) {
  require_rank(input, 4, "batchnorm2d", "input");
  const std::size_t c = input.dim(1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("batchnorm2d: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " do not match channels of input " +
                         shape_string(input.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw DimensionError("conv2d: weight " + shape_string(weight.shape()) +
                         " incompatible with input " + shape_string(input.shape()) +
                         " (expected [Cout," + std::to_string(cin) + ",3,3])");
  }
  if (!bias.defined() || bias.numel() != cout) {
    throw DimensionError("conv2d: bias " +
                         (bias.defined() ? shape_string(bias.shape()) : std::string("undefined")) +
                         " does not match Cout=" + std::to_string(cout));
  }
  if (h == 0 || w == 0) throw DimensionError("conv2d: empty spatial extent");

  const std::size_t hw = h * w;
  const std::size_t kdim = cin * 9;
  Tensor out = Tensor::uninitialized({b, cout, h, w});
  std::vector<float> cols(kdim * hw);
  const float* x = input.data().data();
  const float* wt = weight.data().data();
  float* y = out.mutable_data().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    im2col(x + bi * cin * hw, cin, h, w, cols.data());
    float* yb = y + bi * cout * hw;
    K().gemm(false, false, cout, hw, kdim, 1.0f, wt, kdim, cols.data(), hw, 0.0f, yb, hw);
    for (std::size_t co = 0; co < cout; ++co) {
      const float bv = bias[co];
      float* plane = yb + co * hw;
      for (std::size_t i = 0; i < hw; ++i) plane[i] += bv;
    }
  }

  if (tape && tape->wants({input, weight, bias})) {
    tape->record({input, weight, bias}, out, [input, weight, bias, out, b, cin, cout, h, w]() mutable {
      const std::size_t hw = h * w;
      const std::size_t kdim = cin * 9;
      const float* gy = out.grad().data();
      if (bias.requires_grad()) {
        float* gb = bias.grad_storage().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t co = 0; co < cout; ++co) {
            gb[co] += static_cast<float>(K().sum(hw, gy + (bi * cout + co) * hw));
          }
        }
      }
      std::vector<float> cols(kdim * hw);
      if (weight.requires_grad()) {
        float* gw = weight.grad_storage().data();
        const float* x = input.data().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          im2col(x + bi * cin * hw, cin, h, w, cols.data());
          K().gemm(false, true, cout, kdim, hw, 1.0f, gy + bi * cout * hw, hw, cols.data(), hw,
                   1.0f, gw, kdim);
        }
      }
      if (input.requires_grad()) {
        float* gx = input.grad_storage().data();
        const float* wt = weight.data().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          K().gemm(true, false, kdim, hw, cout, 1.0f, wt, kdim, gy + bi * cout * hw, hw, 0.0f,
                   cols.data(), hw);
          col2im_add(cols.data(), cin, h, w, gx + bi * cin * hw);
        }
      }
    });
  }
  return out;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormMode mode,
                   RunningStats& stats, NormStats eval_stats, Tape* tape) {
  check_batchnorm_args(input, gamma, beta);
  if (mode == NormMode::eval) return batchnorm2d(input, gamma, beta, std::as_const(stats), eval_stats, tape);

  const std::size_t c = input.dim(1);
  const std::size_t per_channel = input.dim(0) * input.dim(2) * input.dim(3);
  if (per_channel < 2) {
    throw DegenerateBatchError("batchnorm2d: train mode needs at least 2 values per channel, input " +
                               shape_string(input.shape()));
  }
  std::vector<double> unbiased;
  ChannelStats st = batch_moments(input, &unbiased);
  if (stats.mean.defined() && stats.var.defined()) {
    if (stats.mean.numel() != c || stats.var.numel() != c) {
      throw DimensionError("batchnorm2d: running stats do not match " + std::to_string(c) +
                           " channels");
    }
    auto rm = stats.mean.mutable_data();
    auto rv = stats.var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = (1.0f - kBatchNormMomentum) * rm[ch] + kBatchNormMomentum * st.mean[ch];
      rv[ch] = (1.0f - kBatchNormMomentum) * rv[ch] +
               kBatchNormMomentum * static_cast<float>(unbiased[ch]);
    }
  }
  return batchnorm_impl(input, gamma, beta, st, true, tape);
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   const RunningStats& stats, NormStats eval_stats, Tape* tape) {
  check_batchnorm_args(input, gamma, beta);
  if (eval_stats == NormStats::batch) {
    return batchnorm_impl(input, gamma, beta, batch_moments(input, nullptr), true, tape);
  }
  const std::size_t c = input.dim(1);
  if (!stats.mean.defined() || stats.mean.numel() != c || !stats.var.defined() ||
      stats.var.numel() != c) {
    throw DimensionError("batchnorm2d: running stats missing or not sized for " +
                         std::to_string(c) + " channels");
  }
  ChannelStats st{std::vector<float>(c), std::vector<float>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    st.mean[ch] = stats.mean[ch];
    st.inv_std[ch] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(stats.var[ch]) +
                                                        kBatchNormEpsilon));
  }
  return batchnorm_impl(input, gamma, beta, st, false, tape);
}

Tensor relu(const Tensor& input, Tape* tape) {
  Tensor out = Tensor::uninitialized(input.shape());
  K().relu_forward(input.numel(), input.data().data(), out.mutable_data().data());
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out]() mutable {
      K().relu_backward(input.numel(), input.data().data(), out.grad().data(),
                        input.grad_storage().data());
    });
  }
  return out;
}

namespace {

// Index (within the plane) of the first maximum of the 2x2 window at
// (oy, ox), clipped to the plane. A window of NaNs yields its top-left index.
inline std::uint32_t window_argmax(const float* src, std::size_t h, std::size_t w, std::size_t oy,
                                   std::size_t ox, float* value) {
  float best = -std::numeric_limits<float>::infinity();
  auto best_idx = static_cast<std::uint32_t>(2 * oy * w + 2 * ox);
  for (std::size_t dy = 0; dy < 2; ++dy) {
    const std::size_t iy = 2 * oy + dy;
    if (iy >= h) break;
    for (std::size_t dx = 0; dx < 2; ++dx) {
      const std::size_t ix = 2 * ox + dx;
      if (ix >= w) break;
      const float v = src[iy * w + ix];
      if (v > best) {
        best = v;
        best_idx = static_cast<std::uint32_t>(iy * w + ix);
      }
    }
  }
  *value = best;
  return best_idx;
}

inline float take_max(float best, float v) { return v > best ? v : best; }

}  // namespace

Tensor maxpool2x2(const Tensor& input, Tape* tape) {
  require_rank(input, 4, "maxpool2x2", "input");
  const std::size_t b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h == 0 || w == 0) throw DimensionError("maxpool2x2: empty spatial extent");
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor out = Tensor::uninitialized({b, c, ho, wo});
  const float* x = input.data().data();
  float* y = out.mutable_data().data();
  const std::size_t full_rows = h / 2, full_cols = w / 2;
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    const float* src = x + plane * h * w;
    float* dst = y + plane * ho * wo;
    for (std::size_t oy = 0; oy < full_rows; ++oy) {
      const float* r0 = src + 2 * oy * w;
      const float* r1 = r0 + w;
      float* d = dst + oy * wo;
      for (std::size_t ox = 0; ox < full_cols; ++ox) {
        float best = take_max(-std::numeric_limits<float>::infinity(), r0[2 * ox]);
        best = take_max(best, r0[2 * ox + 1]);
        best = take_max(best, r1[2 * ox]);
        d[ox] = take_max(best, r1[2 * ox + 1]);
      }
      if (full_cols < wo) window_argmax(src, h, w, oy, full_cols, d + full_cols);
    }
    if (full_rows < ho) {
      for (std::size_t ox = 0; ox < wo; ++ox) window_argmax(src, h, w, full_rows, ox, dst + full_rows * wo + ox);
    }
  }
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out, h, w, ho, wo]() mutable {
      const float* x = input.data().data();
      const float* gy = out.grad().data();
      float* gx = input.grad_storage().data();
      const std::size_t planes = out.numel() / (ho * wo);
      float unused = 0.0f;
      for (std::size_t plane = 0; plane < planes; ++plane) {
        const float* src = x + plane * h * w;
        float* dst = gx + plane * h * w;
        const float* g = gy + plane * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            std::size_t idx;
            if (2 * oy + 1 < h && 2 * ox + 1 < w) {
              const std::size_t i0 = 2 * oy * w + 2 * ox;
              const std::size_t cand[4] = {i0, i0 + 1, i0 + w, i0 + w + 1};
              idx = i0;
              float best = -std::numeric_limits<float>::infinity();
              for (std::size_t q : cand) {
                if (src[q] > best) {
                  best = src[q];
                  idx = q;
                }
              }
            } else {
              idx = window_argmax(src, h, w, oy, ox, &unused);
            }
            dst[idx] += g[oy * wo + ox];
          }
        }
      }
    });
  }
  return out;
}

Tensor flatten(const Tensor& input, Tape* tape) {
  if (!input.defined() || input.rank() < 2) {
    throw DimensionError("flatten: input must have rank >= 2");
  }
  const std::size_t b = input.dim(0);
  Tensor out = input.reshaped({b, input.numel() / std::max<std::size_t>(b, 1)});
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out]() mutable {
      K().axpy(out.numel(), 1.0f, out.grad().data(), input.grad_storage().data());
    });
  }
  return out;
}

Tensor pairwise_sq_dist(const Tensor& queries, const Tensor& prototypes, Tape* tape) {
  require_rank(queries, 2, "pairwise_sq_dist", "queries");
  require_rank(prototypes, 2, "pairwise_sq_dist", "prototypes");
  const std::size_t nq = queries.dim(0), np = prototypes.dim(0), d = queries.dim(1);
  if (prototypes.dim(1) != d) {
    throw DimensionError("pairwise_sq_dist: queries " + shape_string(queries.shape()) +
                         " and prototypes " + shape_string(prototypes.shape()) +
                         " disagree on embedding dimension");
  }
  Tensor out = Tensor::zeros({nq, np});
  const float* q = queries.data().data();
  const float* p = prototypes.data().data();
  float* y = out.mutable_data().data();
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < np; ++j) y[i * np + j] = K().squared_distance(d, q + i * d, p + j * d);
  }
  if (tape && tape->wants({queries, prototypes})) {
    tape->record({queries, prototypes}, out, [queries, prototypes, out, nq, np, d]() mutable {
      const float* q = queries.data().data();
      const float* p = prototypes.data().data();
      const float* gy = out.grad().data();
      float* gq = queries.requires_grad() ? queries.grad_storage().data() : nullptr;
      float* gp = prototypes.requires_grad() ? prototypes.grad_storage().data() : nullptr;
      for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < np; ++j) {
          const float g2 = 2.0f * gy[i * np + j];
          if (g2 == 0.0f) continue;
          if (gq) {
            K().axpy(d, g2, q + i * d, gq + i * d);
            K().axpy(d, -g2, p + j * d, gq + i * d);
          }
          if (gp) {
            K().axpy(d, g2, p + j * d, gp + j * d);
            K().axpy(d, -g2, q + i * d, gp + j * d);
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& logits, Tape* tape) {
  require_rank(logits, 2, "log_softmax", "logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (cols == 0) throw DimensionError("log_softmax: need at least one column");
  Tensor out = Tensor::zeros(logits.shape());
  const float* x = logits.data().data();
  float* y = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * cols;
    const float m = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(static_cast<double>(xr[j]) - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = static_cast<float>(xr[j] - lse);
  }
  if (tape && tape->wants({logits})) {
    tape->record({logits}, out, [logits, out, rows, cols]() mutable {
      const float* y = out.data().data();
      const float* gy = out.grad().data();
      float* gx = logits.grad_storage().data();
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gsum += gy[r * cols + j];
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t i = r * cols + j;
          gx[i] += static_cast<float>(gy[i] - std::exp(static_cast<double>(y[i])) * gsum);
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& log_probs, std::span<const int> labels, Tape* tape) {
  require_rank(log_probs, 2, "cross_entropy", "log_probs");
  const std::size_t rows = log_probs.dim(0), cols = log_probs.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  if (rows == 0) throw DimensionError("cross_entropy: empty batch");
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0," + std::to_string(cols) + ")");
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) acc += log_probs[i * cols + static_cast<std::size_t>(labels[i])];
  Tensor out = Tensor::scalar(static_cast<float>(-acc / static_cast<double>(rows)));
  if (tape && tape->wants({log_probs})) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape->record({log_probs}, out, [log_probs, out, lab = std::move(lab), rows, cols]() mutable {
      const float g = out.grad()[0] / static_cast<float>(rows);
      float* gx = log_probs.grad_storage().data();
      for (std::size_t i = 0; i < rows; ++i) gx[i * cols + static_cast<std::size_t>(lab[i])] -= g;
    });
  }
  return out;
}

Tensor sum(const Tensor& input, Tape* tape) {
  double acc = 0.0;
  for (float v : input.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out]() mutable {
      const float g = out.grad()[0];
      for (float& v : input.grad_storage()) v += g;
    });
  }
  return out;
}

Tensor scale(const Tensor& input, float factor, Tape* tape) {
  Tensor out = Tensor::zeros(input.shape());
  K().affine(input.numel(), input.data().data(), factor, 0.0f, out.mutable_data().data());
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out, factor]() mutable {
      K().axpy(out.numel(), factor, out.grad().data(), input.grad_storage().data());
    });
  }
  return out;
}

Tensor group_mean(const Tensor& input, std::span<const int> groups, int n_groups, Tape* tape) {
  require_rank(input, 2, "group_mean", "input");
  const std::size_t rows = input.dim(0), d = input.dim(1);
  if (groups.size() != rows) {
    throw DimensionError("group_mean: " + std::to_string(groups.size()) + " group ids for " +
                         std::to_string(rows) + " rows");
  }
  if (n_groups <= 0) throw DimensionError("group_mean: need at least one group");
  const auto ng = static_cast<std::size_t>(n_groups);
  std::vector<std::size_t> counts(ng, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (groups[r] < 0 || groups[r] >= n_groups) {
      throw LabelError("group_mean: group " + std::to_string(groups[r]) + " at row " +
                       std::to_string(r) + " outside [0," + std::to_string(n_groups) + ")");
    }
    ++counts[static_cast<std::size_t>(groups[r])];
  }
  for (std::size_t g = 0; g < ng; ++g) {
    if (counts[g] == 0) throw ContractError("group_mean: group " + std::to_string(g) + " is empty");
  }
  Tensor out = Tensor::zeros({ng, d});
  const float* x = input.data().data();
  float* y = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    K().axpy(d, 1.0f, x + r * d, y + static_cast<std::size_t>(groups[r]) * d);
  }
  for (std::size_t g = 0; g < ng; ++g) {
    const float cnt = static_cast<float>(counts[g]);
    for (std::size_t k = 0; k < d; ++k) y[g * d + k] /= cnt;
  }
  if (tape && tape->wants({input})) {
    std::vector<int> grp(groups.begin(), groups.end());
    tape->record({input}, out, [input, out, grp = std::move(grp), counts, rows, d]() mutable {
      const float* gy = out.grad().data();
      float* gx = input.grad_storage().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const auto g = static_cast<std::size_t>(grp[r]);
        K().axpy(d, 1.0f / static_cast<float>(counts[g]), gy + g * d, gx + r * d);
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& input, std::size_t begin, std::size_t end, Tape* tape) {
  if (!input.defined() || input.rank() < 1 || begin > end || end > input.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " +
                         (input.defined() ? shape_string(input.shape()) : std::string("undefined")));
  }
  Shape shape = input.shape();
  const std::size_t row = input.numel() / std::max<std::size_t>(shape[0], 1);
  shape[0] = end - begin;
  auto src = input.data().subspan(begin * row, (end - begin) * row);
  Tensor out = Tensor::from(std::move(shape), std::vector<float>(src.begin(), src.end()));
  if (tape && tape->wants({input})) {
    tape->record({input}, out, [input, out, begin, row]() mutable {
      K().axpy(out.numel(), 1.0f, out.grad().data(), input.grad_storage().data() + begin * row);
    });
  }
  return out;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no tensors");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<float> data;
  data.reserve(shape_numel(shape));
  for (const Tensor& t : items) {
    if (t.shape() != inner) {
      throw DimensionError("stack: shape " + shape_string(t.shape()) + " differs from " +
                           shape_string(inner));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace xeml::ops
