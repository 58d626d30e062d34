#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xeml/ops.hpp"
#include "xeml/tensor.hpp"

namespace xeml {

inline constexpr int kMaxEncoderDepth = 6;

/// Conv-n encoder shape: `depth` ConvBlocks of uniform width `channels` over
/// square `input_size` images with `input_channels` planes.
struct EncoderConfig {
  int depth = 4;
  int channels = 64;
  int input_size = 64;
  int input_channels = 3;

  /// Five 512-wide blocks over 64x64 inputs.
  static EncoderConfig wide_profile() { return {5, 512, 64, 3}; }

  void validate() const;
  /// Spatial extent after `depth` ceil-halving pools.
  std::size_t output_size() const;
  /// channels * output_size()^2, i.e. channels * (input_size / 2^depth)^2 when divisible.
  std::size_t embedding_dim() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Trainable parameters (theta) plus batchnorm running statistics.
///
/// Entries keep insertion order, which is the block order produced by
/// build_encoder. Copies share tensor storage; use clone() for a deep copy.
class ParamStore {
 public:
  struct Entry {
    std::string path;
    Tensor tensor;
  };

  void add_param(std::string path, Tensor t);
  void add_buffer(std::string path, Tensor t);

  Tensor& param(std::string_view path);
  const Tensor& param(std::string_view path) const;
  Tensor& buffer(std::string_view path);
  const Tensor& buffer(std::string_view path) const;

  std::vector<Entry>& params() { return params_; }
  const std::vector<Entry>& params() const { return params_; }
  std::vector<Entry>& buffers() { return buffers_; }
  const std::vector<Entry>& buffers() const { return buffers_; }

  /// Number of trainable scalars.
  std::size_t parameter_count() const;

  void zero_grad();
  ParamStore clone() const;

  /// Bitwise equality of all parameter and buffer values and shapes.
  bool identical_to(const ParamStore& other) const;

 private:
  std::vector<Entry> params_;
  std::vector<Entry> buffers_;
};

/// Parameter-path helpers, e.g. block_path(2, "conv.weight") == "block2.conv.weight".
std::string block_path(int block, std::string_view leaf);

/// ConvBlock = conv3x3(pad 1) -> batchnorm -> relu -> maxpool2x2, stacked
/// `depth` times. Conv weights are Kaiming-uniform over fan-in
/// (bound sqrt(6 / (9 * Cin))), biases 0, gamma 1, beta 0, running mean 0,
/// running var 1.
ParamStore build_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Train-mode embedding: batch statistics, running stats updated in
/// `params`, every op recorded on `tape`. Output [B, embedding_dim].
Tensor embed(ParamStore& params, const EncoderConfig& config, const Tensor& images, Tape& tape);

/// Eval-mode embedding. No parameter or statistic is modified.
Tensor embed(const ParamStore& params, const EncoderConfig& config, const Tensor& images,
             ops::NormStats stats = ops::NormStats::batch);

}  // namespace xeml
