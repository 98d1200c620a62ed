#include "diablo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "diablo/errors.hpp"

namespace diablo {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'A', 'B', 'L', 'O', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<std::uint8_t>& data() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > data_.size() - pos_) {
      throw FormatError(fmt::format("{}: truncated {} at offset {}", source_, what, pos_));
    }
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const std::uint8_t* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::vector<std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(checkpoint.version);
  w.u32(static_cast<std::uint32_t>(checkpoint.parameters.size()));
  w.u64(checkpoint.config_json.size());
  w.bytes(checkpoint.config_json.data(), checkpoint.config_json.size());
  for (const NamedTensor& t : checkpoint.parameters) {
    if (shape_size(t.shape) != t.values.size()) {
      throw ShapeError(fmt::format("checkpoint parameter {} has shape {} but {} values", t.name,
                                   shape_string(t.shape), t.values.size()));
    }
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t e : t.shape) w.u64(e);
    for (double v : t.values) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.data().size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, path.string());

  if (std::memcmp(r.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(r.source() + ": bad magic at offset 0");
  }
  Checkpoint ck;
  ck.version = r.u32("version");
  if (ck.version != kCheckpointVersion) {
    throw FormatError(fmt::format("{}: unsupported checkpoint version {} at offset 8 (expected {})",
                                  r.source(), ck.version, kCheckpointVersion));
  }
  const std::uint32_t count = r.u32("parameter count");
  const std::uint64_t config_len = r.u64("config length");
  if (config_len > r.remaining()) {
    throw FormatError(fmt::format("{}: truncated config at offset {}", r.source(), r.offset()));
  }
  const auto* cfg = r.take(config_len, "config");
  ck.config_json.assign(reinterpret_cast<const char*>(cfg), config_len);

  for (std::uint32_t p = 0; p < count; ++p) {
    NamedTensor t;
    const std::uint32_t name_len = r.u32("name length");
    const auto* name = r.take(name_len, "name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint32_t rank = r.u32("rank");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t e = r.u64("extent");
      if (e == 0 || n > r.remaining() / e) {
        throw FormatError(fmt::format("{}: implausible extent {} at offset {}", r.source(), e,
                                      r.offset() - 8));
      }
      t.shape.push_back(e);
      n *= e;
    }
    t.values.resize(n);
    for (double& v : t.values) v = r.f64("payload");
    ck.parameters.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(fmt::format("{}: {} trailing bytes at offset {}", r.source(), r.remaining(),
                                  r.offset()));
  }
  return ck;
}

}  // namespace diablo
