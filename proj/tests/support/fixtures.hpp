#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xeml/dataset.hpp"
#include "xeml/tensor.hpp"

namespace xeml::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Random images with values k/255 in a dataset of `domains` x `classes`.
inline MultiDomainDataset noise_dataset(int domains, int classes, int per_class, int size,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  MultiDomainDataset ds;
  ds.image_size = size;
  ds.channels = 3;
  for (int c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (int d = 0; d < domains; ++d) {
    DomainTable t;
    t.domain_id = d;
    t.name = "d" + std::to_string(d);
    for (int c = 0; c < classes; ++c) {
      std::vector<Tensor> imgs;
      for (int i = 0; i < per_class; ++i) {
        std::vector<float> v(static_cast<std::size_t>(3 * size * size));
        for (float& x : v) x = static_cast<float>(level(rng)) / 255.0f;
        imgs.push_back(Tensor::from({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)}, std::move(v)));
      }
      t.examples.push_back(std::move(imgs));
    }
    ds.domains.push_back(std::move(t));
  }
  return ds;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("xeml_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace xeml::testing
