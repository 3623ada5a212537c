#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikesplit/network.hpp"

namespace spikesplit {

enum class DType : std::uint8_t { float32 = 1, float64 = 2 };

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct BottleneckPlacement {
  std::size_t split = 0;
  Shape3 out_shape;
  std::size_t timesteps = 1;
  friend bool operator==(const BottleneckPlacement&, const BottleneckPlacement&) = default;
};

/// Every parameter and tdBN statistic of a model, by name.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  std::string arch_name;
  std::uint16_t arch_id = 0;
  std::optional<BottleneckPlacement> bottleneck;
  std::vector<NamedTensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Checkpoint capture(const Model& model);
/// Copies values into a model of the same architecture and bottleneck placement.
void restore(Model& model, const Checkpoint& ckpt);
/// Builds the architecture's model, inserts the recorded bottleneck and restores.
Model model_from_checkpoint(const ArchitectureSpec& arch, const Checkpoint& ckpt);

// Layout (little-endian): "SSCK" version:u32 arch_id:u16 name:str has_bn:u8
// [split:u32 c:u32 h:u32 w:u32 T:u32] count:u32 then per tensor
// name:str dtype:u8 rank:u8 dims:u32[rank] data; trailing crc32:u32.
// str = u16 length + bytes. float64 keeps round trips exact for double models.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt, DType dtype = DType::float64);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, DType dtype = DType::float64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spikesplit
