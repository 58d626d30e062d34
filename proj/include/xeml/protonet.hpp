#pragma once

#include <span>
#include <vector>

#include "xeml/encoder.hpp"
#include "xeml/tensor.hpp"

namespace xeml {

struct Episode;

/// Class prototypes: row n is the mean support embedding of episode label n.
struct PrototypeSet {
  Tensor matrix;               // [N, d]
  std::vector<int> class_ids;  // episode-local labels in row order (0..N-1)
};

/// Mean support embedding per class. Every label in [0, n_way) must occur
/// exactly K times (K = size / n_way); otherwise EpisodeShapeError.
PrototypeSet compute_prototypes(const Tensor& support_emb, std::span<const int> support_labels,
                                int n_way, Tape* tape = nullptr);

/// Log-probabilities [Q, N] = log_softmax(-squared_distance(query, prototype)).
Tensor classify(const PrototypeSet& prototypes, const Tensor& query_emb, Tape* tape = nullptr);

/// Row-wise argmax of a [Q, N] matrix (first maximum on ties).
std::vector<int> predict(const Tensor& log_probs);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& log_probs, std::span<const int> labels);

struct EpisodeResult {
  Tensor loss;  // [1], tape-recorded in train mode
  double accuracy = 0.0;
};

/// Train mode: support and query are embedded as one batch (so batchnorm
/// statistics cover S u Q), running stats update, and the mean query
/// cross-entropy is recorded on `tape`.
EpisodeResult episode_loss(ParamStore& params, const EncoderConfig& config, const Episode& episode,
                           Tape& tape);

/// Eval mode: no recording, no parameter or statistic updates.
EpisodeResult episode_loss(const ParamStore& params, const EncoderConfig& config,
                           const Episode& episode, ops::NormStats stats = ops::NormStats::batch);

}  // namespace xeml
