#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xeml/dataset.hpp"
#include "xeml/encoder.hpp"
#include "xeml/ops.hpp"
#include "xeml/sampler.hpp"
#include "xeml/train.hpp"

namespace xeml {

struct AccuracySummary {
  double mean = 0.0;
  /// 1.96 * s / sqrt(n), s the sample standard deviation (n - 1 divisor);
  /// 0 when n == 1.
  double ci95_half_width = 0.0;
};

AccuracySummary summarize(std::span<const double> accuracies);

struct EvalOptions {
  int runs = 600;
  std::uint64_t seed = 7;
  int threads = 1;
  ops::NormStats norm_stats = ops::NormStats::batch;
  std::string checkpoint_id;
};

struct EvalReport {
  int runs = 0;
  std::vector<double> per_episode_acc;
  double mean_acc = 0.0;
  double ci95_half_width = 0.0;
  EpisodeSpec spec;
  std::string checkpoint_id;
  std::uint64_t seed = 0;
  ops::NormStats norm_stats = ops::NormStats::batch;
  std::vector<std::uint64_t> episode_digests;
};

/// Episode `index` of the evaluation stream for `seed`. Every model evaluated
/// with the same seed sees the same sequence.
Episode evaluation_episode(const MultiDomainDataset& target, const EpisodeSpec& spec,
                           std::uint64_t seed, std::uint64_t index);

/// Runs `options.runs` target_eval episodes without touching `params`.
/// Episodes are spread over `options.threads` workers and merged by index,
/// so the report does not depend on the thread count.
EvalReport evaluate(const ParamStore& params, const EncoderConfig& config,
                    const MultiDomainDataset& target, const EpisodeSpec& spec,
                    const EvalOptions& options);

struct SweepEntry {
  int depth = 0;
  EvalReport report;
  TrainLog log;
};

using StageProgress = std::function<void(const std::string& stage)>;

/// Trains one encoder per depth (same seed, same episode stream) and
/// evaluates each on the same target episodes. Results are in `depths` order.
std::vector<SweepEntry> depth_sweep(const MultiDomainDataset& sources,
                                    const MultiDomainDataset& target,
                                    const EncoderConfig& base, const TrainConfig& train_config,
                                    const EpisodeSpec& eval_spec, const EvalOptions& options,
                                    std::span<const int> depths,
                                    const StageProgress& progress = {});

struct ModeEntry {
  std::string label;  // single-<id>, same_domain, cross_domain
  EpisodeSpec train_spec;
  EvalReport report;
  TrainLog log;
};

enum class ModeSet : unsigned { cross = 1, same = 2, single = 4, all = 7 };

/// Trains one encoder per sampling mode (single_domain per source domain,
/// then same_domain, then cross_domain) with the training spec's N/K/m and
/// evaluates all of them on one target episode sequence.
std::vector<ModeEntry> compare_modes(const MultiDomainDataset& sources,
                                     const MultiDomainDataset& target, const EncoderConfig& config,
                                     const TrainConfig& train_config, const EpisodeSpec& eval_spec,
                                     const EvalOptions& options, unsigned modes = 7,
                                     const StageProgress& progress = {});

/// depth,mean_acc,ci95,runs,seed
std::string sweep_csv(std::span<const SweepEntry> entries);
/// mode,mean_acc,ci95,runs,seed
std::string modes_csv(std::span<const ModeEntry> entries);
/// "<depth> <mean_acc>" per line, for plotting.
std::string sweep_plot_data(std::span<const SweepEntry> entries);
/// episode,acc,digest
std::string episodes_csv(const EvalReport& report);

}  // namespace xeml
