#include "xeml/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "xeml/errors.hpp"
#include "xeml/random.hpp"

namespace xeml {

void EncoderConfig::validate() const {
  if (depth < 1 || depth > kMaxEncoderDepth) {
    throw ConfigError("encoder depth " + std::to_string(depth) + " outside [1," +
                      std::to_string(kMaxEncoderDepth) + "]");
  }
  if (channels < 1) throw ConfigError("encoder channels must be >= 1, got " + std::to_string(channels));
  if (input_size < 1) throw ConfigError("encoder input_size must be >= 1, got " + std::to_string(input_size));
  if (input_channels < 1) {
    throw ConfigError("encoder input_channels must be >= 1, got " + std::to_string(input_channels));
  }
}

std::size_t EncoderConfig::output_size() const {
  auto s = static_cast<std::size_t>(input_size);
  for (int i = 0; i < depth; ++i) s = (s + 1) / 2;
  return s;
}

std::size_t EncoderConfig::embedding_dim() const {
  const std::size_t s = output_size();
  return static_cast<std::size_t>(channels) * s * s;
}

namespace {

ParamStore::Entry* find(std::vector<ParamStore::Entry>& v, std::string_view path) {
  for (auto& e : v) {
    if (e.path == path) return &e;
  }
  return nullptr;
}

const ParamStore::Entry* find(const std::vector<ParamStore::Entry>& v, std::string_view path) {
  for (const auto& e : v) {
    if (e.path == path) return &e;
  }
  return nullptr;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

void ParamStore::add_param(std::string path, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({std::move(path), std::move(t)});
}

void ParamStore::add_buffer(std::string path, Tensor t) {
  buffers_.push_back({std::move(path), std::move(t)});
}

Tensor& ParamStore::param(std::string_view path) {
  if (auto* e = find(params_, path)) return e->tensor;
  throw ContractError("no parameter named " + std::string(path));
}

const Tensor& ParamStore::param(std::string_view path) const {
  if (const auto* e = find(params_, path)) return e->tensor;
  throw ContractError("no parameter named " + std::string(path));
}

Tensor& ParamStore::buffer(std::string_view path) {
  if (auto* e = find(buffers_, path)) return e->tensor;
  throw ContractError("no buffer named " + std::string(path));
}

const Tensor& ParamStore::buffer(std::string_view path) const {
  if (const auto* e = find(buffers_, path)) return e->tensor;
  throw ContractError("no buffer named " + std::string(path));
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : params_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : params_) e.tensor.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : params_) out.add_param(e.path, e.tensor.clone());
  for (const auto& e : buffers_) out.add_buffer(e.path, e.tensor.clone());
  return out;
}

bool ParamStore::identical_to(const ParamStore& other) const {
  auto same = [](const std::vector<Entry>& a, const std::vector<Entry>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].path != b[i].path || !bitwise_equal(a[i].tensor, b[i].tensor)) return false;
    }
    return true;
  };
  return same(params_, other.params_) && same(buffers_, other.buffers_);
}

std::string block_path(int block, std::string_view leaf) {
  return "block" + std::to_string(block) + "." + std::string(leaf);
}

ParamStore build_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_stream(seed, StreamSalt::init);
  ParamStore store;
  auto cin = static_cast<std::size_t>(config.input_channels);
  const auto width = static_cast<std::size_t>(config.channels);
  for (int b = 0; b < config.depth; ++b) {
    const float bound = std::sqrt(6.0f / static_cast<float>(cin * 9));
    std::uniform_real_distribution<float> init(-bound, bound);
    Tensor weight = Tensor::zeros({width, cin, 3, 3});
    for (float& v : weight.mutable_data()) v = init(rng);
    store.add_param(block_path(b, "conv.weight"), weight);
    store.add_param(block_path(b, "conv.bias"), Tensor::zeros({width}));
    store.add_param(block_path(b, "bn.gamma"), Tensor::full({width}, 1.0f));
    store.add_param(block_path(b, "bn.beta"), Tensor::zeros({width}));
    store.add_buffer(block_path(b, "bn.running_mean"), Tensor::zeros({width}));
    store.add_buffer(block_path(b, "bn.running_var"), Tensor::full({width}, 1.0f));
    cin = width;
  }
  return store;
}

namespace {

void check_images(const EncoderConfig& config, const Tensor& images) {
  const auto s = static_cast<std::size_t>(config.input_size);
  const auto c = static_cast<std::size_t>(config.input_channels);
  if (images.rank() != 4 || images.dim(1) != c || images.dim(2) != s || images.dim(3) != s) {
    throw DimensionError("embed: images " + shape_string(images.shape()) + " do not match [B," +
                         std::to_string(c) + "," + std::to_string(s) + "," + std::to_string(s) +
                         "]; resize inputs to the encoder input_size");
  }
  if (images.dim(0) == 0) throw DimensionError("embed: empty batch");
}

}  // namespace

Tensor embed(ParamStore& params, const EncoderConfig& config, const Tensor& images, Tape& tape) {
  config.validate();
  check_images(config, images);
  Tensor x = images;
  for (int b = 0; b < config.depth; ++b) {
    x = ops::conv2d(x, params.param(block_path(b, "conv.weight")),
                    params.param(block_path(b, "conv.bias")), &tape);
    ops::RunningStats stats{params.buffer(block_path(b, "bn.running_mean")),
                            params.buffer(block_path(b, "bn.running_var"))};
    x = ops::batchnorm2d(x, params.param(block_path(b, "bn.gamma")),
                         params.param(block_path(b, "bn.beta")), ops::NormMode::train, stats,
                         ops::NormStats::batch, &tape);
    x = ops::relu(x, &tape);
    x = ops::maxpool2x2(x, &tape);
  }
  return ops::flatten(x, &tape);
}

Tensor embed(const ParamStore& params, const EncoderConfig& config, const Tensor& images,
             ops::NormStats stats) {
  config.validate();
  check_images(config, images);
  Tensor x = images;
  for (int b = 0; b < config.depth; ++b) {
    x = ops::conv2d(x, params.param(block_path(b, "conv.weight")),
                    params.param(block_path(b, "conv.bias")));
    const ops::RunningStats running{params.buffer(block_path(b, "bn.running_mean")),
                                    params.buffer(block_path(b, "bn.running_var"))};
    x = ops::batchnorm2d(x, params.param(block_path(b, "bn.gamma")),
                         params.param(block_path(b, "bn.beta")), running, stats);
    x = ops::relu(x);
    x = ops::maxpool2x2(x);
  }
  return ops::flatten(x);
}

}  // namespace xeml
