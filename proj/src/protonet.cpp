#include "xeml/protonet.hpp"

#include <string>

#include "xeml/errors.hpp"
#include "xeml/ops.hpp"
#include "xeml/sampler.hpp"

namespace xeml {

PrototypeSet compute_prototypes(const Tensor& support_emb, std::span<const int> support_labels,
                                int n_way, Tape* tape) {
  if (n_way < 1) throw EpisodeShapeError("compute_prototypes: n_way must be >= 1");
  if (support_emb.rank() != 2 || support_emb.dim(0) != support_labels.size()) {
    throw DimensionError("compute_prototypes: embeddings " + shape_string(support_emb.shape()) +
                         " vs " + std::to_string(support_labels.size()) + " labels");
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_way), 0);
  for (int label : support_labels) {
    if (label < 0 || label >= n_way) {
      throw EpisodeShapeError("compute_prototypes: support label " + std::to_string(label) +
                              " outside [0," + std::to_string(n_way) + ")");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  const std::size_t k = counts[0];
  for (std::size_t n = 0; n < counts.size(); ++n) {
    if (counts[n] != k || k == 0) {
      throw EpisodeShapeError("compute_prototypes: class " + std::to_string(n) + " has " +
                              std::to_string(counts[n]) + " support examples, class 0 has " +
                              std::to_string(k));
    }
  }
  PrototypeSet out;
  out.matrix = ops::group_mean(support_emb, support_labels, n_way, tape);
  for (int n = 0; n < n_way; ++n) out.class_ids.push_back(n);
  return out;
}

Tensor classify(const PrototypeSet& prototypes, const Tensor& query_emb, Tape* tape) {
  Tensor dist = ops::pairwise_sq_dist(query_emb, prototypes.matrix, tape);
  return ops::log_softmax(ops::scale(dist, -1.0f, tape), tape);
}

std::vector<int> predict(const Tensor& log_probs) {
  const std::size_t rows = log_probs.dim(0), cols = log_probs.dim(1);
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (log_probs[r * cols + c] > log_probs[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Tensor& log_probs, std::span<const int> labels) {
  const std::vector<int> pred = predict(log_probs);
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

EpisodeResult head(const Tensor& emb, const Episode& episode, Tape* tape) {
  const std::size_t ns = episode.support.size();
  const std::size_t nq = episode.query.size();
  const std::vector<int> s_labels = episode.support_labels();
  const std::vector<int> q_labels = episode.query_labels();
  Tensor s_emb = ops::slice_rows(emb, 0, ns, tape);
  Tensor q_emb = ops::slice_rows(emb, ns, ns + nq, tape);
  PrototypeSet protos = compute_prototypes(s_emb, s_labels, episode.n_way(), tape);
  Tensor log_probs = classify(protos, q_emb, tape);
  EpisodeResult r;
  r.loss = ops::cross_entropy(log_probs, q_labels, tape);
  r.accuracy = accuracy(log_probs, q_labels);
  return r;
}

}  // namespace

EpisodeResult episode_loss(ParamStore& params, const EncoderConfig& config, const Episode& episode,
                           Tape& tape) {
  return head(embed(params, config, episode.batch(), tape), episode, &tape);
}

EpisodeResult episode_loss(const ParamStore& params, const EncoderConfig& config,
                           const Episode& episode, ops::NormStats stats) {
  return head(embed(params, config, episode.batch(), stats), episode, nullptr);
}

}  // namespace xeml
