#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xeml/dataset.hpp"
#include "xeml/encoder.hpp"
#include "xeml/sampler.hpp"

namespace xeml {

struct TrainConfig {
  int episodes = 2000;
  float lr = 5e-4f;
  EpisodeSpec spec;
  std::uint64_t seed = 7;
  /// Write ckpt_<episode>.xeml every this many episodes (0: final only).
  int checkpoint_every = 0;
  /// Where checkpoints and abort diagnostics go; empty disables file output.
  std::filesystem::path checkpoint_dir;
  /// Held-in validation every this many episodes (0: never).
  int eval_every = 0;
  int eval_episodes = 20;

  void validate() const;
};

struct TrainRecord {
  int episode = 0;
  float loss = 0.0f;
  double accuracy = 0.0;
  int support_domain = 0;
  int query_domain = 0;
  double ms = 0.0;
  std::uint64_t digest = 0;  // identity of the sampled examples
};

struct ValidationRecord {
  int episode = 0;
  double mean_accuracy = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<ValidationRecord> validation;

  /// episode,loss,acc,support_domain,query_domain,ms
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  ParamStore params;
  TrainLog log;
};

/// p <- p - lr * grad(p) for every parameter, then zeroes the gradients.
/// Throws ContractError if any parameter has no gradient.
void sgd_step(ParamStore& params, float lr);

using TrainProgress = std::function<void(const TrainRecord&)>;

/// Episodic meta-training: per episode, sample from `sources`, compute the
/// ProtoNet loss in train mode, backpropagate and take one SGD step.
/// Initialization and the episode stream derive from `config.seed`, so the
/// episode sequence does not depend on the encoder shape. A non-finite loss
/// throws TrainingAborted (after writing abort.txt when checkpoint_dir is set).
TrainResult train(const MultiDomainDataset& sources, const EncoderConfig& encoder,
                  const TrainConfig& config, const TrainProgress& progress = {});

/// Episode `index` of the training stream for `seed`.
Episode training_episode(const MultiDomainDataset& sources, const EpisodeSpec& spec,
                         std::uint64_t seed, std::uint64_t index);

}  // namespace xeml
