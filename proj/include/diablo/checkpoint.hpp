#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diablo/tensor.hpp"

namespace diablo {

// Binary layout, all integers little-endian:
//
//   0   8 bytes  magic "DIABLOCK"
//   8   u32      format version
//   12  u32      parameter count P
//   16  u64      config length L, then L bytes of UTF-8 JSON
//   P × { u32 name length, name bytes, u32 rank, rank × u64 extents,
//         product(extents) × IEEE-754 float64 }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<NamedTensor> parameters;
  std::string config_json;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

// Throws FormatError on a bad magic, unsupported version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diablo
