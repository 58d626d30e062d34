#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xeml/dataset.hpp"
#include "xeml/random.hpp"
#include "xeml/tensor.hpp"

namespace xeml {

enum class EpisodeMode {
  cross_domain,   // S from D_i, Q from D_j, i != j
  same_domain,    // S and Q from one randomly chosen D_i
  single_domain,  // S and Q always from the fixed domain `EpisodeSpec::domain`
  target_eval,    // meta-test: S and Q from one (target) domain
};

std::string_view mode_name(EpisodeMode mode);
/// Accepts the mode names plus the short forms cross, same, single, target.
EpisodeMode parse_mode(std::string_view text);

struct EpisodeSpec {
  int n_way = 3;
  int k_shot = 5;
  int m_query = 16;
  EpisodeMode mode = EpisodeMode::cross_domain;
  int domain = 0;  // domain id for single_domain

  bool operator==(const EpisodeSpec&) const = default;
};

struct EpisodeItem {
  Tensor image;
  int label = 0;    // episode-local, in [0, N)
  int example = 0;  // index within its (domain, class) cell
};

/// One N-way K-shot task. Items are grouped by label: support holds K items
/// per label in label order, query holds m per label.
struct Episode {
  std::vector<EpisodeItem> support;
  std::vector<EpisodeItem> query;
  int support_domain = 0;
  int query_domain = 0;
  std::vector<int> class_map;  // class_map[label] = global class id

  int n_way() const { return static_cast<int>(class_map.size()); }
  std::vector<int> support_labels() const;
  std::vector<int> query_labels() const;
  /// Support images followed by query images as one [S+Q,C,H,W] batch.
  Tensor batch() const;
  /// Hash of the sampled (domain, class, example) identities.
  std::uint64_t digest() const;
};

/// Throws exactly what sample_episode would for this (dataset, spec), without
/// drawing anything.
void validate_spec(const MultiDomainDataset& dataset, const EpisodeSpec& spec);

/// Draws classes uniformly without replacement, then examples uniformly
/// without replacement within each (domain, class) cell. Cross-domain mode
/// draws the ordered pair (i, j), i != j, uniformly over all NS*(NS-1) pairs.
Episode sample_episode(const MultiDomainDataset& dataset, const EpisodeSpec& spec, Rng& rng);

}  // namespace xeml
