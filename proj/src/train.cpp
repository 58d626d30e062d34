#include "xeml/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#if defined(__GLIBC__)
#endif

#include "xeml/checkpoint.hpp"
#include "xeml/errors.hpp"
#include "xeml/kernels.hpp"
#include "xeml/protonet.hpp"

namespace xeml {

void TrainConfig::validate() const {
  if (episodes < 0) throw ConfigError("train.episodes must be >= 0, got " + std::to_string(episodes));
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (eval_every > 0 && eval_episodes < 1) throw ConfigError("train.eval_episodes must be >= 1");
}

std::string TrainLog::csv() const {
  std::ostringstream os;
  os << "episode,loss,acc,support_domain,query_domain,ms\n";
  os.precision(9);
  for (const auto& r : records) {
    os << r.episode << ',' << r.loss << ',' << r.accuracy << ',' << r.support_domain << ','
       << r.query_domain << ',' << r.ms << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << csv();
}

void sgd_step(ParamStore& params, float lr) {
  for (auto& e : params.params()) {
    if (!e.tensor.has_grad()) {
      throw ContractError("sgd_step: parameter " + e.path + " has no gradient");
    }
  }
  const auto& k = kernels::active();
  for (auto& e : params.params()) {
    auto data = e.tensor.mutable_data();
    auto grad = e.tensor.grad_storage();
    k.axpy(data.size(), -lr, grad.data(), data.data());
    e.tensor.zero_grad();
  }
}

Episode training_episode(const MultiDomainDataset& sources, const EpisodeSpec& spec,
                         std::uint64_t seed, std::uint64_t index) {
  Rng rng = make_stream(seed, StreamSalt::train_episode, index);
  return sample_episode(sources, spec, rng);
}

namespace {

double validation_accuracy(const ParamStore& params, const EncoderConfig& encoder,
                           const MultiDomainDataset& sources, const TrainConfig& config, int at) {
  EpisodeSpec spec = config.spec;
  if (spec.mode != EpisodeMode::single_domain) spec.mode = EpisodeMode::same_domain;
  double acc = 0.0;
  for (int i = 0; i < config.eval_episodes; ++i) {
    Rng rng = make_stream(config.seed, StreamSalt::validation,
                          static_cast<std::uint64_t>(at) * 100000 + static_cast<std::uint64_t>(i));
    acc += episode_loss(params, encoder, sample_episode(sources, spec, rng)).accuracy;
  }
  return acc / config.eval_episodes;
}

}  // namespace

TrainResult train(const MultiDomainDataset& sources, const EncoderConfig& encoder,
                  const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  encoder.validate();
  sources.validate();
  validate_spec(sources, config.spec);
  if (sources.image_size != encoder.input_size || sources.channels != encoder.input_channels) {
    throw ConfigError("dataset images are " + std::to_string(sources.channels) + "x" +
                      std::to_string(sources.image_size) + "^2 but the encoder expects " +
                      std::to_string(encoder.input_channels) + "x" +
                      std::to_string(encoder.input_size) + "^2");
  }

  keep_large_buffers_on_heap();
  const kernels::FlushDenormals ftz;
  TrainResult result{build_encoder(encoder, config.seed), {}};
  const bool write_files = !config.checkpoint_dir.empty();
  for (int ep = 0; ep < config.episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    const Episode episode = training_episode(sources, config.spec, config.seed, static_cast<std::uint64_t>(ep));
    Tape tape;
    EpisodeResult r = episode_loss(result.params, encoder, episode, tape);
    const float loss = r.loss.item();
    if (!std::isfinite(loss)) {
      std::ostringstream diag;
      diag << "non-finite loss " << loss << " at episode " << ep << " (seed " << config.seed
           << ", episode stream index " << ep << "), support domain " << episode.support_domain
           << ", query domain " << episode.query_domain << ", classes";
      for (int c : episode.class_map) diag << ' ' << c;
      if (write_files) {
        std::filesystem::create_directories(config.checkpoint_dir);
        std::ofstream(config.checkpoint_dir / "abort.txt") << diag.str() << '\n';
        save_checkpoint(config.checkpoint_dir / "abort.xeml", encoder, result.params);
      }
      throw TrainingAborted(diag.str());
    }
    backward(r.loss);
    sgd_step(result.params, config.lr);

    TrainRecord rec;
    rec.episode = ep;
    rec.loss = loss;
    rec.accuracy = r.accuracy;
    rec.support_domain = episode.support_domain;
    rec.query_domain = episode.query_domain;
    rec.digest = episode.digest();
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);
    if (progress) progress(rec);

    const int done = ep + 1;
    if (config.eval_every > 0 && done % config.eval_every == 0) {
      result.log.validation.push_back(
          {done, validation_accuracy(result.params, encoder, sources, config, done)});
    }
    if (write_files && config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      save_checkpoint(config.checkpoint_dir / ("ckpt_" + std::to_string(done) + ".xeml"), encoder,
                      result.params);
    }
  }
  if (write_files) save_checkpoint(config.checkpoint_dir / "final.xeml", encoder, result.params);
  return result;
}

}  // namespace xeml
