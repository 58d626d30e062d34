#include "xeml/sampler.hpp"

#include <algorithm>

#include "xeml/errors.hpp"
#include "xeml/ops.hpp"

namespace xeml {

std::string_view mode_name(EpisodeMode mode) {
  switch (mode) {
    case EpisodeMode::cross_domain: return "cross_domain";
    case EpisodeMode::same_domain: return "same_domain";
    case EpisodeMode::single_domain: return "single_domain";
    case EpisodeMode::target_eval: return "target_eval";
  }
  return "?";
}

EpisodeMode parse_mode(std::string_view text) {
  if (text == "cross_domain" || text == "cross") return EpisodeMode::cross_domain;
  if (text == "same_domain" || text == "same") return EpisodeMode::same_domain;
  if (text == "single_domain" || text == "single") return EpisodeMode::single_domain;
  if (text == "target_eval" || text == "target") return EpisodeMode::target_eval;
  throw ConfigError("unknown episode mode '" + std::string(text) +
                    "' (expected cross_domain, same_domain, single_domain or target_eval)");
}

std::vector<int> Episode::support_labels() const {
  std::vector<int> out;
  out.reserve(support.size());
  for (const auto& it : support) out.push_back(it.label);
  return out;
}

std::vector<int> Episode::query_labels() const {
  std::vector<int> out;
  out.reserve(query.size());
  for (const auto& it : query) out.push_back(it.label);
  return out;
}

Tensor Episode::batch() const {
  std::vector<Tensor> images;
  images.reserve(support.size() + query.size());
  for (const auto& it : support) images.push_back(it.image);
  for (const auto& it : query) images.push_back(it.image);
  return ops::stack(images);
}

std::uint64_t Episode::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(support_domain));
  mix(static_cast<std::uint64_t>(query_domain));
  for (int c : class_map) mix(static_cast<std::uint64_t>(c));
  for (const auto& it : support) mix(static_cast<std::uint64_t>(it.example));
  for (const auto& it : query) mix(static_cast<std::uint64_t>(it.example));
  return h;
}

namespace {

void check_cell(const MultiDomainDataset& dataset, const DomainTable& d, std::size_t cls,
                std::size_t need, const char* why) {
  const std::size_t have = d.examples[cls].size();
  if (have < need) {
    throw SamplingError("cell (domain " + d.name + ", class " + dataset.class_names[cls] + ") has " +
                        std::to_string(have) + " examples, " + why + " needs " +
                        std::to_string(need));
  }
}

}  // namespace

void validate_spec(const MultiDomainDataset& dataset, const EpisodeSpec& spec) {
  if (spec.n_way < 2) throw ConfigError("n_way must be >= 2, got " + std::to_string(spec.n_way));
  if (spec.k_shot < 1) throw ConfigError("k_shot must be >= 1, got " + std::to_string(spec.k_shot));
  if (spec.m_query < 1) throw ConfigError("m_query must be >= 1, got " + std::to_string(spec.m_query));
  if (dataset.domains.empty()) throw ModeError("dataset has no domains");
  if (static_cast<std::size_t>(spec.n_way) > dataset.class_names.size()) {
    throw SamplingError(std::to_string(spec.n_way) + "-way episodes need " +
                        std::to_string(spec.n_way) + " classes, dataset has " +
                        std::to_string(dataset.class_names.size()));
  }
  const auto k = static_cast<std::size_t>(spec.k_shot);
  const auto m = static_cast<std::size_t>(spec.m_query);
  switch (spec.mode) {
    case EpisodeMode::cross_domain:
      if (dataset.domains.size() < 2) {
        throw ModeError("cross_domain episodes need >= 2 domains, dataset has " +
                        std::to_string(dataset.domains.size()));
      }
      // Support and query come from different domains, so a cell never has to
      // serve both at once.
      for (const auto& d : dataset.domains) {
        for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
          check_cell(dataset, d, c, std::max(k, m), "cross_domain");
        }
      }
      break;
    case EpisodeMode::single_domain: {
      const std::size_t idx = [&] {
        try {
          return dataset.domain_index(spec.domain);
        } catch (const ConfigError&) {
          throw ModeError("single_domain episodes need domain id " + std::to_string(spec.domain) +
                          ", which the dataset does not have");
        }
      }();
      for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
        check_cell(dataset, dataset.domains[idx], c, k + m, "single_domain");
      }
      break;
    }
    case EpisodeMode::same_domain:
    case EpisodeMode::target_eval:
      for (const auto& d : dataset.domains) {
        for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
          check_cell(dataset, d, c, k + m, std::string(mode_name(spec.mode)).c_str());
        }
      }
      break;
  }
}

Episode sample_episode(const MultiDomainDataset& dataset, const EpisodeSpec& spec, Rng& rng) {
  validate_spec(dataset, spec);
  const std::size_t ns = dataset.domains.size();
  std::size_t si = 0, qi = 0;
  switch (spec.mode) {
    case EpisodeMode::cross_domain: {
      std::uniform_int_distribution<std::size_t> first(0, ns - 1), second(0, ns - 2);
      si = first(rng);
      qi = second(rng);
      if (qi >= si) ++qi;
      break;
    }
    case EpisodeMode::single_domain:
      si = qi = dataset.domain_index(spec.domain);
      break;
    case EpisodeMode::same_domain:
    case EpisodeMode::target_eval: {
      std::uniform_int_distribution<std::size_t> pick(0, ns - 1);
      si = qi = pick(rng);
      break;
    }
  }
  const DomainTable& sd = dataset.domains[si];
  const DomainTable& qd = dataset.domains[qi];

  Episode ep;
  ep.support_domain = sd.domain_id;
  ep.query_domain = qd.domain_id;
  const auto n = static_cast<std::size_t>(spec.n_way);
  const auto k = static_cast<std::size_t>(spec.k_shot);
  const auto m = static_cast<std::size_t>(spec.m_query);
  const std::vector<std::size_t> classes = sample_without_replacement(rng, dataset.class_names.size(), n);
  ep.support.reserve(n * k);
  ep.query.reserve(n * m);
  std::vector<std::vector<EpisodeItem>> query_by_label(n);
  for (std::size_t label = 0; label < n; ++label) {
    const std::size_t c = classes[label];
    ep.class_map.push_back(static_cast<int>(c));
    auto take = [&](const DomainTable& d, std::size_t count, std::vector<std::size_t> picks,
                    std::size_t offset, std::vector<EpisodeItem>& into) {
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t e = picks[offset + i];
        into.push_back({d.examples[c][e], static_cast<int>(label), static_cast<int>(e)});
      }
    };
    if (si != qi) {
      take(sd, k, sample_without_replacement(rng, sd.examples[c].size(), k), 0, ep.support);
      take(qd, m, sample_without_replacement(rng, qd.examples[c].size(), m), 0, query_by_label[label]);
    } else {
      const auto picks = sample_without_replacement(rng, sd.examples[c].size(), k + m);
      take(sd, k, picks, 0, ep.support);
      take(sd, m, picks, k, query_by_label[label]);
    }
  }
  for (auto& items : query_by_label) {
    for (auto& it : items) ep.query.push_back(std::move(it));
  }
  return ep;
}

}  // namespace xeml
