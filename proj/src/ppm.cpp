#include "xeml/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "xeml/checkpoint.hpp"
#include "xeml/errors.hpp"

namespace xeml {
namespace {

class HeaderParser {
 public:
  HeaderParser(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw IngestionError("PPM " + source_ + ": " + what);
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    long v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) fail(std::string(what) + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(std::string("missing ") + what);
    return v;
  }

  void magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') fail("not a binary P6 file");
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void raster_separator() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing raster separator");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes, const std::string& source) {
  HeaderParser p(bytes, source);
  p.magic();
  const long width = p.number("width");
  const long height = p.number("height");
  const long maxval = p.number("maxval");
  if (width < 1 || height < 1) p.fail("empty image");
  if (maxval < 1 || maxval > 65535) p.fail("maxval " + std::to_string(maxval) + " out of range");
  p.raster_separator();

  const auto w = static_cast<std::size_t>(width), h = static_cast<std::size_t>(height);
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = w * h * 3 * sample_bytes;
  if (bytes.size() - p.pos() < need) {
    p.fail("truncated raster: need " + std::to_string(need) + " bytes, have " +
           std::to_string(bytes.size() - p.pos()));
  }
  Tensor out = Tensor::zeros({3, h, w});
  auto data = out.mutable_data();
  const std::uint8_t* raster = bytes.data() + p.pos();
  const float scale = static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t s = i * 3 + c;
      unsigned v = sample_bytes == 1 ? raster[s] : (unsigned{raster[2 * s]} << 8) | raster[2 * s + 1];
      if (v > static_cast<unsigned>(maxval)) p.fail("sample exceeds maxval");
      data[c * w * h + i] = static_cast<float>(v) / scale;
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("encode_ppm: expected [3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + w * h * 3);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * w * h + i], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

Tensor read_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_file_bytes(path), path.string());
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  write_file_bytes(path, encode_ppm(image));
}

}  // namespace xeml
