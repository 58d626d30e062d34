#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xeml/dataset.hpp"
#include "xeml/encoder.hpp"
#include "xeml/eval.hpp"
#include "xeml/sampler.hpp"
#include "xeml/train.hpp"

namespace xeml {

/// Flat key=value run configuration. Every key has a default; unknown keys
/// are rejected. '#' starts a comment.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Applies one `key=value` assignment (ConfigError on unknown key).
  void assign(std::string_view assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  const std::string& str(const std::string& key) const;
  long long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key with its resolved value, one per line, in key order.
  std::string resolved() const;

  EncoderConfig encoder() const;
  EpisodeSpec train_spec() const;
  EpisodeSpec eval_spec() const;
  TrainConfig train() const;
  EvalOptions eval_options() const;

  static const std::vector<std::pair<std::string, std::string>>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

/// Number of classes kept aside for meta-test when split.novel_classes is
/// "auto": max(n_way, ceil(0.3 * classes)), leaving at least n_way base classes.
int auto_novel_classes(int total_classes, int n_way);

struct PreparedData {
  MultiDomainDataset sources;  // held-in domains, base classes
  MultiDomainDataset target;   // held-out domain, novel classes
  std::string description;
};

/// Loads data.root (or generates the synthetic benchmark), holds out
/// `holdout_domain` and applies the class split.
PreparedData prepare_data(const RunConfig& config);

}  // namespace xeml
