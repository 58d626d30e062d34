#include <algorithm>
#include <cmath>
#include <numbers>

#include "xeml/dataset.hpp"
#include "xeml/errors.hpp"

namespace xeml {

const std::array<std::string_view, kSyntheticClassCount>& synthetic_class_names() {
  static const std::array<std::string_view, kSyntheticClassCount> names{
      "circle", "square", "triangle", "cross", "ring",
      "h-stripes", "v-stripes", "diamond", "dot-grid", "L-shape"};
  return names;
}

namespace {

// Shape membership in the unit frame: (u, v) in roughly [-1, 1]^2.
bool inside(int class_id, float u, float v) {
  const float au = std::fabs(u), av = std::fabs(v);
  switch (class_id) {
    case 0:  // circle
      return u * u + v * v <= 1.0f;
    case 1:  // square
      return au <= 0.8f && av <= 0.8f;
    case 2:  // triangle, apex up
      return v <= 0.8f && v >= -0.9f && au <= 0.9f * (v + 0.9f) / 1.7f;
    case 3:  // cross
      return (au <= 0.28f && av <= 0.9f) || (av <= 0.28f && au <= 0.9f);
    case 4: {  // ring
      const float r2 = u * u + v * v;
      return r2 <= 1.0f && r2 >= 0.3f;
    }
    case 5:  // horizontal bars
      return au <= 0.85f && av <= 0.85f && static_cast<int>(std::floor((v + 0.85f) / 0.34f)) % 2 == 0;
    case 6:  // vertical bars
      return au <= 0.85f && av <= 0.85f && static_cast<int>(std::floor((u + 0.85f) / 0.34f)) % 2 == 0;
    case 7:  // diamond
      return au + av <= 1.0f;
    case 8: {  // 3x3 dot grid
      if (au > 0.9f || av > 0.9f) return false;
      const float gu = std::round(u / 0.6f) * 0.6f;
      const float gv = std::round(v / 0.6f) * 0.6f;
      return (u - gu) * (u - gu) + (v - gv) * (v - gv) <= 0.22f * 0.22f;
    }
    case 9:  // L
      return (u >= -0.8f && u <= -0.3f && av <= 0.9f) || (v >= 0.4f && v <= 0.9f && au <= 0.8f);
    default:
      return false;
  }
}

float channel(const Rgb& c, int ch) { return ch == 0 ? c.r : (ch == 1 ? c.g : c.b); }

float background_value(const SynthStyle& style, int ch, int x, int y, int size, float texture) {
  const float base = channel(style.background_color, ch);
  const int cell = std::max(2, size / 8);
  switch (style.background) {
    case Background::solid:
      return base;
    case Background::stripes:
      return base + (((x + y) / cell) % 2 == 0 ? 0.15f : -0.15f);
    case Background::checker:
      return base + (((x / cell) + (y / cell)) % 2 == 0 ? 0.15f : -0.15f);
    case Background::noise:
      return base + texture;
  }
  return base;
}

void box_blur(std::vector<float>& plane, int size, int radius) {
  if (radius <= 0) return;
  std::vector<float> tmp(plane.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        float acc = 0.0f;
        int n = 0;
        for (int d = -radius; d <= radius; ++d) {
          const int sx = pass == 0 ? x + d : x;
          const int sy = pass == 0 ? y : y + d;
          if (sx < 0 || sy < 0 || sx >= size || sy >= size) continue;
          acc += plane[static_cast<std::size_t>(sy * size + sx)];
          ++n;
        }
        tmp[static_cast<std::size_t>(y * size + x)] = acc / static_cast<float>(n);
      }
    }
    plane.swap(tmp);
  }
}

Rgb random_rgb(Rng& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Rgb c;
  c.r = u(rng);
  c.g = u(rng);
  c.b = u(rng);
  return c;
}

}  // namespace

std::vector<SynthStyle> synthetic_styles(int n_domains, std::uint64_t seed) {
  Rng rng = make_stream(seed, StreamSalt::synth_style);
  std::uniform_int_distribution<int> pick_bg(0, 3);
  std::uniform_real_distribution<float> pick_noise(0.0f, 0.08f);
  std::uniform_int_distribution<int> pick_blur(0, 1);
  std::bernoulli_distribution pick_invert(0.5);
  const int offset = pick_bg(rng);
  std::vector<SynthStyle> styles;
  while (static_cast<int>(styles.size()) < n_domains) {
    SynthStyle s;
    // Cycle backgrounds so the first four domains never share a texture.
    s.background = static_cast<Background>((offset + static_cast<int>(styles.size())) % 4);
    s.background_color = random_rgb(rng, 0.05f, 0.35f);
    for (auto& c : s.palette) c = random_rgb(rng, 0.55f, 1.0f);
    s.noise_sigma = pick_noise(rng);
    s.blur_radius = pick_blur(rng);
    s.invert = pick_invert(rng);
    if (std::find(styles.begin(), styles.end(), s) == styles.end()) styles.push_back(s);
  }
  return styles;
}

Tensor render_synthetic(int class_id, const SynthStyle& style, int image_size, Rng& rng) {
  const int size = image_size;
  const float fs = static_cast<float>(size);
  std::uniform_real_distribution<float> jitter(-0.12f, 0.12f);
  std::uniform_real_distribution<float> radius(0.26f, 0.36f);
  std::uniform_real_distribution<float> angle(-0.25f, 0.25f);
  std::uniform_int_distribution<int> pick_color(0, 2);
  std::uniform_real_distribution<float> texture(-0.2f, 0.2f);
  std::normal_distribution<float> noise(0.0f, 1.0f);

  const float cx = fs * (0.5f + jitter(rng));
  const float cy = fs * (0.5f + jitter(rng));
  const float r = fs * radius(rng);
  const float theta = angle(rng);
  const float ct = std::cos(theta), st = std::sin(theta);
  const Rgb fg = style.palette[static_cast<std::size_t>(pick_color(rng))];

  const auto n = static_cast<std::size_t>(size * size);
  std::vector<float> coverage(n, 0.0f), tex(n, 0.0f);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const float px = static_cast<float>(x) + 0.25f + 0.5f * static_cast<float>(sx) - cx;
          const float py = static_cast<float>(y) + 0.25f + 0.5f * static_cast<float>(sy) - cy;
          const float u = (ct * px + st * py) / r;
          const float v = (-st * px + ct * py) / r;
          hits += inside(class_id, u, v) ? 1 : 0;
        }
      }
      coverage[static_cast<std::size_t>(y * size + x)] = static_cast<float>(hits) / 4.0f;
    }
  }
  if (style.background == Background::noise) {
    for (auto& t : tex) t = texture(rng);
  }

  Tensor out = Tensor::zeros({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  auto data = out.mutable_data();
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<float> plane(n);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const auto i = static_cast<std::size_t>(y * size + x);
        const float bg = background_value(style, ch, x, y, size, tex[i]);
        plane[i] = bg * (1.0f - coverage[i]) + channel(fg, ch) * coverage[i];
      }
    }
    box_blur(plane, size, style.blur_radius);
    for (std::size_t i = 0; i < n; ++i) {
      float v = plane[i];
      if (style.noise_sigma > 0.0f) v += style.noise_sigma * noise(rng);
      if (style.invert) v = 1.0f - v;
      v = std::clamp(v, 0.0f, 1.0f);
      // Quantize to 8 bits so the in-memory dataset equals its PPM tree.
      data[static_cast<std::size_t>(ch) * n + i] = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    }
  }
  return out;
}

MultiDomainDataset generate_synthetic(int n_domains, int n_classes, int per_class, int image_size,
                                      std::uint64_t seed) {
  if (n_classes < 1 || n_classes > kSyntheticClassCount) {
    throw ConfigError("synthetic generator supports 1.." + std::to_string(kSyntheticClassCount) +
                      " classes, got " + std::to_string(n_classes));
  }
  if (n_domains < 2) throw ConfigError("synthetic generator needs >= 2 domains, got " + std::to_string(n_domains));
  if (per_class < 1) throw ConfigError("per_class must be >= 1, got " + std::to_string(per_class));
  if (image_size < 4) throw ConfigError("image_size must be >= 4, got " + std::to_string(image_size));

  MultiDomainDataset ds;
  ds.image_size = image_size;
  ds.channels = 3;
  for (int c = 0; c < n_classes; ++c) ds.class_names.emplace_back(synthetic_class_names()[static_cast<std::size_t>(c)]);
  const std::vector<SynthStyle> styles = synthetic_styles(n_domains, seed);
  for (int d = 0; d < n_domains; ++d) {
    DomainTable table;
    table.domain_id = d;
    table.name = "domain" + std::to_string(d);
    for (int c = 0; c < n_classes; ++c) {
      Rng rng = make_stream(seed, StreamSalt::synth_instance,
                            static_cast<std::uint64_t>(d) * 1000 + static_cast<std::uint64_t>(c));
      std::vector<Tensor> images;
      images.reserve(static_cast<std::size_t>(per_class));
      for (int i = 0; i < per_class; ++i) images.push_back(render_synthetic(c, styles[static_cast<std::size_t>(d)], image_size, rng));
      table.examples.push_back(std::move(images));
    }
    ds.domains.push_back(std::move(table));
  }
  return ds;
}

}  // namespace xeml
