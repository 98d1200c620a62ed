#include "diablo/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include <fmt/format.h>

#include "diablo/errors.hpp"

namespace diablo {

std::vector<int> Dataset::classes() const {
  std::set<int> labels;
  for (const Sample& s : samples) labels.insert(s.label);
  return {labels.begin(), labels.end()};
}

std::map<int, std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].label].push_back(i);
  return out;
}

Dataset Dataset::subset(const std::vector<int>& labels) const {
  const std::set<int> keep(labels.begin(), labels.end());
  Dataset out;
  for (const Sample& s : samples) {
    if (keep.contains(s.label)) out.samples.push_back(s);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (classes == 0 || samples_per_class == 0 || side == 0 || tile_size == 0 || vocabulary == 0 ||
      pattern_tiles == 0) {
    throw ArgumentError("synthetic spec extents must be positive");
  }
  if (side % tile_size != 0) {
    throw ArgumentError(fmt::format("tile_size {} does not divide side {}", tile_size, side));
  }
  if (pattern_tiles > grid()) {
    throw ArgumentError(fmt::format("a {0}x{0}-tile prototype does not fit a {1}x{1}-tile image",
                                    pattern_tiles, grid()));
  }
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be non-negative");
}

namespace {

using Tile = std::vector<double>;

void paste_tile(Image& image, const Tile& tile, std::size_t size, std::size_t tile_row,
                std::size_t tile_col) {
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      image.pixels[(tile_row * size + r) * image.width + tile_col * size + c] = tile[r * size + c];
    }
  }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  const std::size_t t = spec.tile_size;
  std::vector<Tile> vocabulary(spec.vocabulary, Tile(t * t));
  for (Tile& tile : vocabulary) {
    for (double& v : tile) v = unit(rng);
  }
  const std::size_t pt = spec.pattern_tiles;
  std::uniform_int_distribution<std::size_t> pick_tile(0, spec.vocabulary - 1);
  std::vector<std::vector<std::size_t>> prototypes(spec.classes, std::vector<std::size_t>(pt * pt));
  for (auto& proto : prototypes) {
    for (std::size_t& id : proto) id = pick_tile(rng);
  }

  const std::size_t grid = spec.grid();
  const auto free_range = static_cast<long>(grid - pt);
  const long centre = free_range / 2;
  const auto shift = static_cast<long>(spec.max_shift);
  std::uniform_int_distribution<long> jitter(-shift, shift);
  std::uniform_int_distribution<std::size_t> any_cell(0, grid - 1);

  Dataset out;
  out.samples.reserve(spec.classes * spec.samples_per_class);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      Image img{spec.side, spec.side, std::vector<double>(spec.side * spec.side, 0.0)};
      for (std::size_t d = 0; d < spec.distractors; ++d) {
        const std::size_t row = any_cell(rng);
        const std::size_t col = any_cell(rng);
        paste_tile(img, vocabulary[pick_tile(rng)], t, row, col);
      }
      const long dy = shift > 0 ? jitter(rng) : 0;
      const long dx = shift > 0 ? jitter(rng) : 0;
      const auto top = static_cast<std::size_t>(std::clamp(centre + dy, 0L, free_range));
      const auto left = static_cast<std::size_t>(std::clamp(centre + dx, 0L, free_range));
      for (std::size_t r = 0; r < pt; ++r) {
        for (std::size_t c = 0; c < pt; ++c) {
          paste_tile(img, vocabulary[prototypes[k][r * pt + c]], t, top + r, left + c);
        }
      }
      if (spec.noise_std > 0.0) {
        for (double& v : img.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
      }
      out.samples.push_back({std::move(img), static_cast<int>(k)});
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t r = 0; r < image.height; ++r) {
    std::reverse(out.pixels.begin() + static_cast<long>(r * image.width),
                 out.pixels.begin() + static_cast<long>((r + 1) * image.width));
  }
  return out;
}

std::uint8_t quantize_pixel(double value) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                          const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(fmt::format("{}: truncated header at offset {}", path.string(), offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);

  const std::uint32_t image_magic = read_u32_be(image_bytes, 0, images);
  if (image_magic != kIdxImageMagic) {
    throw FormatError(fmt::format("{}: bad magic 0x{:08x} at offset 0, expected 0x{:08x}",
                                  images.string(), image_magic, kIdxImageMagic));
  }
  const std::uint32_t label_magic = read_u32_be(label_bytes, 0, labels);
  if (label_magic != kIdxLabelMagic) {
    throw FormatError(fmt::format("{}: bad magic 0x{:08x} at offset 0, expected 0x{:08x}",
                                  labels.string(), label_magic, kIdxLabelMagic));
  }
  const std::uint32_t count = read_u32_be(image_bytes, 4, images);
  const std::uint32_t rows = read_u32_be(image_bytes, 8, images);
  const std::uint32_t cols = read_u32_be(image_bytes, 12, images);
  const std::uint32_t label_count = read_u32_be(label_bytes, 4, labels);
  if (label_count != count) {
    throw FormatError(fmt::format("{}: label count {} at offset 4 does not match {} images",
                                  labels.string(), label_count, count));
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t image_payload = 16 + std::size_t{count} * pixels;
  if (image_bytes.size() < image_payload) {
    throw FormatError(fmt::format("{}: truncated at offset {}, expected {} bytes",
                                  images.string(), image_bytes.size(), image_payload));
  }
  if (label_bytes.size() < 8 + std::size_t{count}) {
    throw FormatError(fmt::format("{}: truncated at offset {}, expected {} bytes",
                                  labels.string(), label_bytes.size(), 8 + std::size_t{count}));
  }

  Dataset out;
  out.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Image img{rows, cols, std::vector<double>(pixels)};
    const std::uint8_t* src = image_bytes.data() + 16 + i * pixels;
    for (std::size_t k = 0; k < pixels; ++k) img.pixels[k] = src[k] / 255.0;
    out.samples.push_back({std::move(img), static_cast<int>(label_bytes[8 + i])});
  }
  return out;
}

void write_idx(const Dataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  std::size_t rows = 0, cols = 0;
  if (!dataset.empty()) {
    rows = dataset.samples.front().image.height;
    cols = dataset.samples.front().image.width;
  }
  std::vector<std::uint8_t> image_bytes;
  std::vector<std::uint8_t> label_bytes;
  append_u32_be(image_bytes, kIdxImageMagic);
  append_u32_be(image_bytes, static_cast<std::uint32_t>(dataset.size()));
  append_u32_be(image_bytes, static_cast<std::uint32_t>(rows));
  append_u32_be(image_bytes, static_cast<std::uint32_t>(cols));
  append_u32_be(label_bytes, kIdxLabelMagic);
  append_u32_be(label_bytes, static_cast<std::uint32_t>(dataset.size()));
  for (const Sample& s : dataset.samples) {
    if (s.image.height != rows || s.image.width != cols) {
      throw ArgumentError("write_idx: all images must share one size");
    }
    if (s.label < 0 || s.label > 255) {
      throw ArgumentError(fmt::format("write_idx: label {} does not fit in a byte", s.label));
    }
    for (double v : s.image.pixels) image_bytes.push_back(quantize_pixel(v));
    label_bytes.push_back(static_cast<std::uint8_t>(s.label));
  }
  write_file(images, image_bytes);
  write_file(labels, label_bytes);
}

}  // namespace diablo
