#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikesplit/layers.hpp"
#include "spikesplit/spike.hpp"
#include "spikesplit/tensor.hpp"

namespace spikesplit {

enum class BlockKind { stem, residual, separable };

std::string_view to_string(BlockKind kind);

/// One block of a declarative architecture, with shapes already inferred.
///
/// residual:  conv1x1 -> conv3x3(stride) -> conv1x1, each followed by tdBN; the
///            first two also by LIF. The shortcut (identity or 1x1 conv + tdBN) is
///            added before the block's final LIF.
/// separable: depthwise 3x3(stride) + tdBN + LIF, pointwise 1x1 + tdBN + LIF.
/// stem:      one conv + optional tdBN + LIF converting analog input to spikes.
struct BlockSpec {
  BlockKind kind = BlockKind::stem;
  std::string name;
  Shape3 input_shape;
  Shape3 output_shape;
  std::vector<ConvSpec> convs;  // main path, in execution order
  std::optional<ConvSpec> shortcut;
  bool tdbn = true;

  bool has_shortcut() const { return kind == BlockKind::residual; }
  /// Inputs of every conv in this block, parallel to convs (then shortcut).
  std::vector<Shape3> conv_inputs() const;
  std::uint64_t macs() const;
};

struct ArchitectureSpec {
  int version = 1;
  std::string name;
  std::uint16_t id = 0;
  Shape3 input;
  std::size_t classes = 0;
  LifParams lif;
  BlockSpec stem;
  std::vector<BlockSpec> blocks;  // the candidate split points, one per block

  std::size_t num_splits() const { return blocks.size(); }
  /// Feature shape emitted by block `split` (1-based).
  Shape3 split_shape(std::size_t split) const;
  void check_split(std::size_t split) const;
};

/// Parses the JSON architecture schema (see data/*.arch).
ArchitectureSpec parse_arch(std::string_view text);
ArchitectureSpec load_arch(const std::filesystem::path& path);

/// Directory holding shipped .arch/.tsv files: $SPIKESPLIT_DATA_DIR or the build-time default.
std::filesystem::path data_dir();

/// Loads a shipped architecture by name ("resnet50", "mobilenetv1", "toy") or a path to an .arch file.
ArchitectureSpec build_arch(std::string_view name_or_path);

/// MACs of every convolution (shortcuts included) from the input up to and
/// including block `split`. The stem counts as part of the edge prefix.
std::uint64_t prefix_flops(const ArchitectureSpec& arch, std::size_t split);

struct SplitPoint {
  std::size_t index;  // 1-based
  Shape3 feature_shape;
};

std::vector<SplitPoint> enumerate_split_points(const ArchitectureSpec& arch);

/// True when every block that halves the spatial size also doubles its input channel count
/// relative to the previous block's output.
bool channels_double_on_downsample(const ArchitectureSpec& arch);

}  // namespace spikesplit
