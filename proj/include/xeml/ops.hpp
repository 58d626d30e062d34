#pragma once

#include <span>
#include <vector>

#include "xeml/tensor.hpp"

// Differentiable operations. Every op takes an optional tape: when it is
// non-null and some input requires grad, the op is recorded and its output
// participates in backward(). With a null tape the op is a plain forward
// computation.

namespace xeml::ops {

/// 3x3 convolution, stride 1, zero padding 1.
/// input [B,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] -> [B,Cout,H,W]
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape = nullptr);

enum class NormMode { train, eval };

/// Where eval-mode batchnorm takes its statistics from.
enum class NormStats {
  batch,    // current batch (transductive)
  running,  // accumulated running estimates
};

struct RunningStats {
  Tensor mean;  // [C]
  Tensor var;   // [C], unbiased
};

inline constexpr float kBatchNormEpsilon = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

/// Per-channel batch normalization over (B,H,W).
///
/// train: normalizes with biased batch statistics and updates `stats` with
/// momentum 0.1 (running var uses the unbiased estimate). eval: uses batch
/// or running statistics according to `eval_stats`, never updates `stats`.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormMode mode,
                   RunningStats& stats, NormStats eval_stats = NormStats::batch,
                   Tape* tape = nullptr);

/// Eval-mode overload for read-only statistics.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   const RunningStats& stats, NormStats eval_stats, Tape* tape = nullptr);

Tensor relu(const Tensor& input, Tape* tape = nullptr);

/// 2x2 max pool, stride 2, output [B,C,ceil(H/2),ceil(W/2)]. Gradient goes
/// to the first maximal element in row-major window order.
Tensor maxpool2x2(const Tensor& input, Tape* tape = nullptr);

/// [B, ...] -> [B, prod(...)]
Tensor flatten(const Tensor& input, Tape* tape = nullptr);

/// out[q,n] = sum_k (queries[q,k] - prototypes[n,k])^2
Tensor pairwise_sq_dist(const Tensor& queries, const Tensor& prototypes, Tape* tape = nullptr);

/// Row-wise log-softmax of a [Q,N] matrix, max-shifted.
Tensor log_softmax(const Tensor& logits, Tape* tape = nullptr);

/// -mean_q log_probs[q, labels[q]] as a [1] tensor.
Tensor cross_entropy(const Tensor& log_probs, std::span<const int> labels, Tape* tape = nullptr);

/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& input, Tape* tape = nullptr);

/// factor * input
Tensor scale(const Tensor& input, float factor, Tape* tape = nullptr);

/// Mean of the rows of x[R,d] sharing a group label -> [groups,d]. Rows are
/// summed in index order and divided by the group's count. Every group must
/// be non-empty.
Tensor group_mean(const Tensor& input, std::span<const int> groups, int n_groups,
                  Tape* tape = nullptr);

/// Rows [begin, end) of the leading axis.
Tensor slice_rows(const Tensor& input, std::size_t begin, std::size_t end, Tape* tape = nullptr);

/// Stacks equally-shaped tensors along a new leading axis (not differentiable).
Tensor stack(std::span<const Tensor> items);

}  // namespace xeml::ops
