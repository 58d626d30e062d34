#include "xeml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "xeml/errors.hpp"

namespace xeml {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const std::string& source) : in_(in), source_(source) {}

  void need(std::size_t n) {
    if (in_.size() - pos_ < n) fail("truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint " + source_ + ": " + what);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const std::string& source_;
};

void write_record(Writer& w, const ParamStore::Entry& e) {
  w.u32(static_cast<std::uint32_t>(e.path.size()));
  w.bytes(e.path.data(), e.path.size());
  w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
  for (std::size_t d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.u64(e.tensor.numel());
  for (float v : e.tensor.data()) w.f32(v);
}

ParamStore::Entry read_record(Reader& r) {
  ParamStore::Entry e;
  const std::uint32_t len = r.u32();
  if (len > 4096) r.fail("implausible path length " + std::to_string(len));
  e.path = r.str(len);
  const std::uint32_t rank = r.u32();
  if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for " + e.path);
  Shape shape(rank);
  for (auto& d : shape) d = r.u32();
  const std::uint64_t n = r.u64();
  if (n != shape_numel(shape)) {
    r.fail("record " + e.path + " declares " + std::to_string(n) + " values for shape " +
           shape_string(shape));
  }
  r.need(n * 4);
  std::vector<float> values(n);
  for (auto& v : values) v = r.f32();
  e.tensor = Tensor::from(std::move(shape), std::move(values));
  return e;
}

void check_layout(const std::vector<ParamStore::Entry>& got,
                  const std::vector<ParamStore::Entry>& want, const char* kind, const Reader& r) {
  if (got.size() != want.size()) {
    r.fail(std::string("expected ") + std::to_string(want.size()) + " " + kind + " records, found " +
           std::to_string(got.size()));
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].path != want[i].path || got[i].tensor.shape() != want[i].tensor.shape()) {
      r.fail(std::string(kind) + " record " + std::to_string(i) + " is " + got[i].path + " " +
             shape_string(got[i].tensor.shape()) + ", expected " + want[i].path + " " +
             shape_string(want[i].tensor.shape()));
    }
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const EncoderConfig& config, const ParamStore& params) {
  Writer w;
  w.bytes(kCheckpointMagic, 5);
  w.u32(static_cast<std::uint32_t>(config.depth));
  w.u32(static_cast<std::uint32_t>(config.channels));
  w.u32(static_cast<std::uint32_t>(config.input_size));
  w.u32(static_cast<std::uint32_t>(config.input_channels));
  w.u32(static_cast<std::uint32_t>(params.params().size()));
  for (const auto& e : params.params()) write_record(w, e);
  w.u32(static_cast<std::uint32_t>(params.buffers().size()));
  for (const auto& e : params.buffers()) write_record(w, e);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  Reader r(bytes, source);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0) {
    r.fail("bad magic (expected XEML1)");
  }
  r.str(5);
  Checkpoint ck;
  ck.config.depth = static_cast<int>(r.u32());
  ck.config.channels = static_cast<int>(r.u32());
  ck.config.input_size = static_cast<int>(r.u32());
  ck.config.input_channels = static_cast<int>(r.u32());
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  std::vector<ParamStore::Entry> params, buffers;
  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np && i < 1024; ++i) params.push_back(read_record(r));
  const std::uint32_t nb = r.u32();
  for (std::uint32_t i = 0; i < nb && i < 1024; ++i) buffers.push_back(read_record(r));
  if (!r.done()) r.fail("trailing bytes after last record");

  const ParamStore layout = build_encoder(ck.config, 0);
  check_layout(params, layout.params(), "parameter", r);
  check_layout(buffers, layout.buffers(), "buffer", r);
  for (auto& e : params) ck.params.add_param(std::move(e.path), std::move(e.tensor));
  for (auto& e : buffers) ck.params.add_buffer(std::move(e.path), std::move(e.tensor));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const ParamStore& params) {
  write_file_bytes(path, serialize_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IngestionError& e) {
    throw CheckpointError(e.what());
  }
  return deserialize_checkpoint(bytes, path.string());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_hash(const std::filesystem::path& path) { return fnv1a64(read_file_bytes(path)); }

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("write failed for " + path.string());
}

}  // namespace xeml
