#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xeml/random.hpp"
#include "xeml/tensor.hpp"

namespace xeml {

/// One domain D_j: per-class example lists of [C,H,W] images in [0,1].
struct DomainTable {
  int domain_id = 0;
  std::string name;
  std::vector<std::vector<Tensor>> examples;  // examples[class][i]

  std::size_t image_count() const;
};

/// Domains sharing one label space (same class-id set in every domain).
struct MultiDomainDataset {
  std::vector<DomainTable> domains;
  std::vector<std::string> class_names;
  int image_size = 0;
  int channels = 3;

  /// Throws HomogeneityError when a domain's class set differs, IngestionError
  /// for empty classes, mis-shaped images or values outside [0,1].
  void validate() const;

  std::size_t image_count() const;
  std::size_t domain_index(int domain_id) const;
  const DomainTable& domain(int domain_id) const { return domains[domain_index(domain_id)]; }
};

/// Nearest-neighbour resize of a [C,H,W] image to [C,size,size]:
/// source index = floor(dst * src_extent / size).
Tensor resize_nearest(const Tensor& image, int size);

/// Reads root/<domain>/<class>/<file>.ppm. Domain order follows manifest.txt
/// when present (which must then agree with the tree), else name order;
/// classes and files are sorted by name. Images are resized to `image_size`.
MultiDomainDataset load_image_tree(const std::filesystem::path& root, int image_size);

/// Writes the tree layout read by load_image_tree, plus manifest.txt.
/// Files are named 0000.ppm, 0001.ppm, ... per class.
void write_image_tree(const MultiDomainDataset& dataset, const std::filesystem::path& root);

/// Partition by domain: (all other domains, the held-out one). At least two
/// source domains must remain.
std::pair<MultiDomainDataset, MultiDomainDataset> hold_out(const MultiDomainDataset& dataset,
                                                           int domain_id);

/// Partition by class: (first C - novel classes, last `novel` classes) in
/// every domain. Used to make the meta-test classes unseen during training.
std::pair<MultiDomainDataset, MultiDomainDataset> split_classes(const MultiDomainDataset& dataset,
                                                                int novel);

/// Union of two datasets over the same class list with disjoint domain ids.
MultiDomainDataset merge_domains(const MultiDomainDataset& a, const MultiDomainDataset& b);

// Synthetic multi-domain benchmark: the class is a shape, the domain is a
// rendering style.

enum class Background { solid, stripes, checker, noise };

struct Rgb {
  float r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct SynthStyle {
  Background background = Background::solid;
  Rgb background_color;
  std::array<Rgb, 3> palette;
  float noise_sigma = 0.0f;
  int blur_radius = 0;
  bool invert = false;

  bool operator==(const SynthStyle&) const = default;
};

inline constexpr int kSyntheticClassCount = 10;

/// circle, square, triangle, cross, ring, h-stripes, v-stripes, diamond, dot-grid, L-shape
const std::array<std::string_view, kSyntheticClassCount>& synthetic_class_names();

/// Pairwise-distinct styles for `n_domains` domains drawn from `seed`.
std::vector<SynthStyle> synthetic_styles(int n_domains, std::uint64_t seed);

/// Renders one example of `class_id` under `style`. Position, scale and
/// palette entry are drawn from `rng`.
Tensor render_synthetic(int class_id, const SynthStyle& style, int image_size, Rng& rng);

MultiDomainDataset generate_synthetic(int n_domains, int n_classes, int per_class, int image_size,
                                      std::uint64_t seed);

}  // namespace xeml
