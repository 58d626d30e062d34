#include "xeml/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "xeml/errors.hpp"
#include "xeml/ppm.hpp"

namespace fs = std::filesystem;

namespace xeml {

std::size_t DomainTable::image_count() const {
  std::size_t n = 0;
  for (const auto& cls : examples) n += cls.size();
  return n;
}

std::size_t MultiDomainDataset::image_count() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.image_count();
  return n;
}

std::size_t MultiDomainDataset::domain_index(int domain_id) const {
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].domain_id == domain_id) return i;
  }
  throw ConfigError("no domain with id " + std::to_string(domain_id));
}

void MultiDomainDataset::validate() const {
  if (domains.empty()) throw ConfigError("dataset has no domains");
  if (class_names.empty()) throw ConfigError("dataset has no classes");
  const Shape want{static_cast<std::size_t>(channels), static_cast<std::size_t>(image_size),
                   static_cast<std::size_t>(image_size)};
  std::set<int> ids;
  for (const auto& d : domains) {
    if (!ids.insert(d.domain_id).second) {
      throw ConfigError("duplicate domain id " + std::to_string(d.domain_id));
    }
    if (d.examples.size() != class_names.size()) {
      throw HomogeneityError("domain " + d.name + " has " + std::to_string(d.examples.size()) +
                             " classes, dataset label space has " +
                             std::to_string(class_names.size()));
    }
    for (std::size_t c = 0; c < d.examples.size(); ++c) {
      if (d.examples[c].empty()) {
        throw HomogeneityError("domain " + d.name + " has no examples of class " + class_names[c]);
      }
      for (const Tensor& img : d.examples[c]) {
        if (img.shape() != want) {
          throw IngestionError("domain " + d.name + " class " + class_names[c] + ": image " +
                               shape_string(img.shape()) + " expected " + shape_string(want));
        }
        for (float v : img.data()) {
          if (!(v >= 0.0f && v <= 1.0f)) {
            throw IngestionError("domain " + d.name + " class " + class_names[c] +
                                 ": pixel value outside [0,1]");
          }
        }
      }
    }
  }
}

Tensor resize_nearest(const Tensor& image, int size) {
  if (image.rank() != 3) throw DimensionError("resize_nearest: expected [C,H,W], got " + shape_string(image.shape()));
  if (size < 1) throw ConfigError("resize target must be >= 1");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto s = static_cast<std::size_t>(size);
  if (h == s && w == s) return image;
  Tensor out = Tensor::zeros({c, s, s});
  auto dst = out.mutable_data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < s; ++y) {
      const std::size_t sy = y * h / s;
      for (std::size_t x = 0; x < s; ++x) {
        const std::size_t sx = x * w / s;
        dst[(ch * s + y) * s + x] = image[(ch * h + sy) * w + sx];
      }
    }
  }
  return out;
}

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ManifestLine {
  std::string domain;
  std::size_t classes = 0;
  std::size_t images = 0;
};

std::vector<ManifestLine> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<ManifestLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestLine m;
    std::string classes, images;
    if (!std::getline(ls, m.domain, '\t') || !std::getline(ls, classes, '\t') ||
        !std::getline(ls, images)) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) +
                           ": expected <domain>\\t<class_count>\\t<image_count>");
    }
    try {
      m.classes = std::stoul(classes);
      m.images = std::stoul(images);
    } catch (const std::exception&) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": bad count");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

MultiDomainDataset load_image_tree(const fs::path& root, int image_size) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root " + root.string() + " is not a directory");
  if (image_size < 1) throw ConfigError("image_size must be >= 1");

  std::vector<std::string> domain_names = sorted_subdirs(root);
  std::vector<ManifestLine> manifest;
  const fs::path manifest_path = root / "manifest.txt";
  if (fs::exists(manifest_path)) {
    manifest = read_manifest(manifest_path);
    std::vector<std::string> listed;
    for (const auto& m : manifest) listed.push_back(m.domain);
    std::vector<std::string> sorted_listed = listed;
    std::sort(sorted_listed.begin(), sorted_listed.end());
    if (sorted_listed != domain_names) {
      throw IngestionError(manifest_path.string() + " lists domains {" + join(listed) +
                           "} but the tree has {" + join(domain_names) + "}");
    }
    domain_names = listed;
  }
  if (domain_names.empty()) throw IngestionError("dataset root " + root.string() + " has no domains");

  MultiDomainDataset ds;
  ds.image_size = image_size;
  ds.channels = 3;
  std::vector<std::string> reference_classes;
  for (std::size_t di = 0; di < domain_names.size(); ++di) {
    const fs::path ddir = root / domain_names[di];
    std::vector<std::string> classes = sorted_subdirs(ddir);
    if (di == 0) {
      reference_classes = classes;
    } else if (classes != reference_classes) {
      std::vector<std::string> diff;
      std::set_symmetric_difference(reference_classes.begin(), reference_classes.end(),
                                    classes.begin(), classes.end(), std::back_inserter(diff));
      throw HomogeneityError("domain " + domain_names[di] + " class set differs from domain " +
                             domain_names[0] + "; symmetric difference: {" + join(diff) + "}");
    }
    DomainTable table;
    table.domain_id = static_cast<int>(di);
    table.name = domain_names[di];
    for (const auto& cls : classes) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(ddir / cls)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) {
        throw HomogeneityError("domain " + table.name + " class " + cls + " has no .ppm files");
      }
      std::vector<Tensor> images;
      images.reserve(files.size());
      for (const auto& f : files) images.push_back(resize_nearest(read_ppm(f), image_size));
      table.examples.push_back(std::move(images));
    }
    if (!manifest.empty()) {
      const auto& m = manifest[di];
      if (m.classes != classes.size() || m.images != table.image_count()) {
        throw IngestionError("manifest entry for " + m.domain + " says " +
                             std::to_string(m.classes) + " classes / " + std::to_string(m.images) +
                             " images, tree has " + std::to_string(classes.size()) + " / " +
                             std::to_string(table.image_count()));
      }
    }
    ds.domains.push_back(std::move(table));
  }
  ds.class_names = reference_classes;
  ds.validate();
  return ds;
}

void write_image_tree(const MultiDomainDataset& dataset, const fs::path& root) {
  dataset.validate();
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IngestionError("cannot write " + (root / "manifest.txt").string());
  for (const auto& d : dataset.domains) {
    for (std::size_t c = 0; c < d.examples.size(); ++c) {
      const fs::path dir = root / d.name / dataset.class_names[c];
      fs::create_directories(dir);
      for (std::size_t i = 0; i < d.examples[c].size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu.ppm", i);
        write_ppm(dir / name, d.examples[c][i]);
      }
    }
    manifest << d.name << '\t' << d.examples.size() << '\t' << d.image_count() << '\n';
  }
}

std::pair<MultiDomainDataset, MultiDomainDataset> hold_out(const MultiDomainDataset& dataset,
                                                           int domain_id) {
  const std::size_t idx = dataset.domain_index(domain_id);
  if (dataset.domains.size() < 3) {
    throw ConfigError("hold_out: holding out domain " + std::to_string(domain_id) + " leaves " +
                      std::to_string(dataset.domains.size() - 1) +
                      " source domain(s); cross-domain sampling needs at least 2");
  }
  MultiDomainDataset sources, target;
  for (auto* ds : {&sources, &target}) {
    ds->class_names = dataset.class_names;
    ds->image_size = dataset.image_size;
    ds->channels = dataset.channels;
  }
  for (std::size_t i = 0; i < dataset.domains.size(); ++i) {
    (i == idx ? target : sources).domains.push_back(dataset.domains[i]);
  }
  return {std::move(sources), std::move(target)};
}

std::pair<MultiDomainDataset, MultiDomainDataset> split_classes(const MultiDomainDataset& dataset,
                                                                int novel) {
  const auto total = static_cast<int>(dataset.class_names.size());
  if (novel < 1 || novel >= total) {
    throw ConfigError("split_classes: novel class count " + std::to_string(novel) +
                      " must be in [1," + std::to_string(total - 1) + "]");
  }
  const auto cut = static_cast<std::size_t>(total - novel);
  MultiDomainDataset base, rest;
  for (auto* ds : {&base, &rest}) {
    ds->image_size = dataset.image_size;
    ds->channels = dataset.channels;
  }
  base.class_names.assign(dataset.class_names.begin(), dataset.class_names.begin() + static_cast<long>(cut));
  rest.class_names.assign(dataset.class_names.begin() + static_cast<long>(cut), dataset.class_names.end());
  for (const auto& d : dataset.domains) {
    DomainTable a{d.domain_id, d.name, {}}, b{d.domain_id, d.name, {}};
    a.examples.assign(d.examples.begin(), d.examples.begin() + static_cast<long>(cut));
    b.examples.assign(d.examples.begin() + static_cast<long>(cut), d.examples.end());
    base.domains.push_back(std::move(a));
    rest.domains.push_back(std::move(b));
  }
  return {std::move(base), std::move(rest)};
}

MultiDomainDataset merge_domains(const MultiDomainDataset& a, const MultiDomainDataset& b) {
  if (a.class_names != b.class_names) {
    throw HomogeneityError("merge_domains: datasets have different class lists");
  }
  if (a.image_size != b.image_size || a.channels != b.channels) {
    throw ConfigError("merge_domains: image shapes differ");
  }
  MultiDomainDataset out = a;
  out.domains.insert(out.domains.end(), b.domains.begin(), b.domains.end());
  std::sort(out.domains.begin(), out.domains.end(),
            [](const DomainTable& x, const DomainTable& y) { return x.domain_id < y.domain_id; });
  out.validate();
  return out;
}

}  // namespace xeml
