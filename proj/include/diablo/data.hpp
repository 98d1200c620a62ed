#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace diablo {

// Single-channel image, row-major, pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

struct Sample {
  Image image;
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  // Sorted distinct labels.
  std::vector<int> classes() const;
  // label -> sample indices, in dataset order.
  std::map<int, std::vector<std::size_t>> indices_by_class() const;
  // Samples whose label is in `labels`, in dataset order.
  Dataset subset(const std::vector<int>& labels) const;
};

// Seeded generator for images built from square tiles. A shared vocabulary
// of random tile textures is drawn first; each class prototype is a
// pattern_tiles × pattern_tiles arrangement of vocabulary tiles. A sample
// places its class prototype at the image centre shifted by up to max_shift
// whole tiles per axis, over `distractors` clutter tiles from the same
// vocabulary, then adds Gaussian pixel noise clipped to [0, 1].
struct SyntheticSpec {
  std::size_t classes = 20;
  std::size_t samples_per_class = 30;
  std::size_t side = 16;          // image is side × side pixels
  std::size_t tile_size = 4;      // tile edge in pixels; must divide side
  std::size_t vocabulary = 16;    // distinct tile textures shared by all classes
  std::size_t pattern_tiles = 2;  // prototype edge in tiles
  std::size_t max_shift = 1;      // prototype jitter per axis, in tiles
  std::size_t distractors = 2;    // clutter tiles per image
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  std::size_t grid() const { return side / tile_size; }  // tiles per image edge
  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

Image flip_horizontal(const Image& image);

// IDX (MNIST) files: big-endian magic 0x00000803 for images and 0x00000801
// for labels, then u32 extents, then one byte per pixel or label.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void write_idx(const Dataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Byte value written for a [0, 1] pixel.
std::uint8_t quantize_pixel(double value);

}  // namespace diablo
