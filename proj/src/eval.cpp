#include "xeml/eval.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "xeml/checkpoint.hpp"
#include "xeml/errors.hpp"
#include "xeml/kernels.hpp"
#include "xeml/protonet.hpp"

namespace xeml {

AccuracySummary summarize(std::span<const double> accuracies) {
  if (accuracies.empty()) throw ContractError("summarize: no accuracies");
  AccuracySummary s;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  const auto n = static_cast<double>(accuracies.size());
  s.mean = sum / n;
  if (accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - s.mean) * (a - s.mean);
    s.ci95_half_width = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

Episode evaluation_episode(const MultiDomainDataset& target, const EpisodeSpec& spec,
                           std::uint64_t seed, std::uint64_t index) {
  Rng rng = make_stream(seed, StreamSalt::eval_episode, index);
  return sample_episode(target, spec, rng);
}

EvalReport evaluate(const ParamStore& params, const EncoderConfig& config,
                    const MultiDomainDataset& target, const EpisodeSpec& spec,
                    const EvalOptions& options) {
  if (spec.mode != EpisodeMode::target_eval) {
    throw ConfigError("evaluate: episode mode must be target_eval, got " + std::string(mode_name(spec.mode)));
  }
  if (options.runs < 1) throw ConfigError("eval.runs must be >= 1, got " + std::to_string(options.runs));
  if (options.threads < 1) throw ConfigError("threads must be >= 1, got " + std::to_string(options.threads));
  target.validate();
  validate_spec(target, spec);
  if (target.image_size != config.input_size || target.channels != config.input_channels) {
    throw ConfigError("target images are " + std::to_string(target.image_size) +
                      " px but the encoder expects " + std::to_string(config.input_size));
  }
  keep_large_buffers_on_heap();

  EvalReport report;
  report.runs = options.runs;
  report.spec = spec;
  report.checkpoint_id = options.checkpoint_id;
  report.seed = options.seed;
  report.norm_stats = options.norm_stats;
  report.per_episode_acc.assign(static_cast<std::size_t>(options.runs), 0.0);
  report.episode_digests.assign(static_cast<std::size_t>(options.runs), 0);

  auto run_one = [&](std::size_t i) {
    const kernels::FlushDenormals ftz;
    const Episode ep = evaluation_episode(target, spec, options.seed, i);
    report.episode_digests[i] = ep.digest();
    report.per_episode_acc[i] = episode_loss(params, config, ep, options.norm_stats).accuracy;
  };

  const auto runs = static_cast<std::size_t>(options.runs);
  const auto workers = std::min(runs, static_cast<std::size_t>(options.threads));
  if (workers <= 1) {
    for (std::size_t i = 0; i < runs; ++i) run_one(i);
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < runs; i += workers) run_one(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  const AccuracySummary s = summarize(report.per_episode_acc);
  report.mean_acc = s.mean;
  report.ci95_half_width = s.ci95_half_width;
  return report;
}

namespace {

std::string model_id(const EncoderConfig& config, const ParamStore& params) {
  return hex64(fnv1a64(serialize_checkpoint(config, params)));
}

}  // namespace

std::vector<SweepEntry> depth_sweep(const MultiDomainDataset& sources,
                                    const MultiDomainDataset& target,
                                    const EncoderConfig& base, const TrainConfig& train_config,
                                    const EpisodeSpec& eval_spec, const EvalOptions& options,
                                    std::span<const int> depths, const StageProgress& progress) {
  if (depths.empty()) throw ConfigError("depth sweep needs at least one depth");
  for (int d : depths) {
    EncoderConfig c = base;
    c.depth = d;
    c.validate();
  }
  std::vector<SweepEntry> out;
  for (int d : depths) {
    EncoderConfig c = base;
    c.depth = d;
    if (progress) progress("depth " + std::to_string(d) + ": training");
    TrainConfig tc = train_config;
    if (!tc.checkpoint_dir.empty()) tc.checkpoint_dir /= "depth" + std::to_string(d);
    TrainResult trained = train(sources, c, tc);
    if (progress) progress("depth " + std::to_string(d) + ": evaluating");
    EvalOptions eo = options;
    eo.checkpoint_id = model_id(c, trained.params);
    out.push_back({d, evaluate(trained.params, c, target, eval_spec, eo), std::move(trained.log)});
  }
  return out;
}

std::vector<ModeEntry> compare_modes(const MultiDomainDataset& sources,
                                     const MultiDomainDataset& target, const EncoderConfig& config,
                                     const TrainConfig& train_config, const EpisodeSpec& eval_spec,
                                     const EvalOptions& options, unsigned modes,
                                     const StageProgress& progress) {
  if (sources.domains.size() < 2) {
    throw ModeError("mode comparison needs >= 2 source domains, got " + std::to_string(sources.domains.size()));
  }
  if ((modes & static_cast<unsigned>(ModeSet::all)) == 0) throw ConfigError("mode comparison needs at least one mode");

  std::vector<ModeEntry> plan;
  EpisodeSpec spec = train_config.spec;
  if (modes & static_cast<unsigned>(ModeSet::single)) {
    for (const auto& d : sources.domains) {
      spec.mode = EpisodeMode::single_domain;
      spec.domain = d.domain_id;
      plan.push_back({"single-" + std::to_string(d.domain_id), spec, {}, {}});
    }
  }
  spec.domain = train_config.spec.domain;
  if (modes & static_cast<unsigned>(ModeSet::same)) {
    spec.mode = EpisodeMode::same_domain;
    plan.push_back({"same_domain", spec, {}, {}});
  }
  if (modes & static_cast<unsigned>(ModeSet::cross)) {
    spec.mode = EpisodeMode::cross_domain;
    plan.push_back({"cross_domain", spec, {}, {}});
  }
  for (const auto& entry : plan) validate_spec(sources, entry.train_spec);

  for (auto& entry : plan) {
    if (progress) progress(entry.label + ": training");
    TrainConfig tc = train_config;
    tc.spec = entry.train_spec;
    if (!tc.checkpoint_dir.empty()) tc.checkpoint_dir /= entry.label;
    TrainResult trained = train(sources, config, tc);
    if (progress) progress(entry.label + ": evaluating");
    EvalOptions eo = options;
    eo.checkpoint_id = model_id(config, trained.params);
    entry.report = evaluate(trained.params, config, target, eval_spec, eo);
    entry.log = std::move(trained.log);
  }
  return plan;
}

namespace {

void report_row(std::ostream& os, const EvalReport& r) {
  os << ',' << r.mean_acc << ',' << r.ci95_half_width << ',' << r.runs << ',' << r.seed << '\n';
}

}  // namespace

std::string sweep_csv(std::span<const SweepEntry> entries) {
  std::ostringstream os;
  os.precision(9);
  os << "depth,mean_acc,ci95,runs,seed\n";
  for (const auto& e : entries) {
    os << e.depth;
    report_row(os, e.report);
  }
  return os.str();
}

std::string modes_csv(std::span<const ModeEntry> entries) {
  std::ostringstream os;
  os.precision(9);
  os << "mode,mean_acc,ci95,runs,seed\n";
  for (const auto& e : entries) {
    os << e.label;
    report_row(os, e.report);
  }
  return os.str();
}

std::string sweep_plot_data(std::span<const SweepEntry> entries) {
  std::ostringstream os;
  os.precision(9);
  os << "# depth mean_acc\n";
  for (const auto& e : entries) os << e.depth << ' ' << e.report.mean_acc << '\n';
  return os.str();
}

std::string episodes_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(9);
  os << "episode,acc,digest\n";
  for (std::size_t i = 0; i < report.per_episode_acc.size(); ++i) {
    os << i << ',' << report.per_episode_acc[i] << ',' << hex64(report.episode_digests[i]) << '\n';
  }
  return os.str();
}

}  // namespace xeml
