#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spikesplit/arch.hpp"
#include "spikesplit/bottleneck.hpp"
#include "spikesplit/layers.hpp"
#include "spikesplit/spike.hpp"

namespace spikesplit {

/// Receives the packed output of every LIF layer an inference passes through.
using SpikeRecorder = std::vector<SpikeTensor>;

struct TrainOptions {
  SpikeFn spike_fn = SpikeFn::heaviside;
  SurrogateParams surrogate;
};

/// A spiking block operating on (T, B, C, H, W) tensors.
///
/// infer() is const and keeps no state, so one block may serve many threads.
/// forward_train() records what backward() needs; the two must alternate.
class Block {
 public:
  virtual ~Block() = default;

  virtual const std::string& name() const = 0;
  virtual Shape3 output_shape(const Shape3& in) const = 0;
  virtual Tensor infer(const Tensor& x, SpikeRecorder* recorder) const = 0;
  virtual Tensor forward_train(const Tensor& x, const TrainOptions& opts) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  /// Inference pass that first sets every tdBN's running statistics to this batch's statistics.
  virtual Tensor calibrate(const Tensor& x) = 0;
  virtual void collect(std::vector<Param*>& out) = 0;
  virtual std::unique_ptr<Block> clone() const = 0;
  virtual void init(Rng& rng) = 0;
};

std::unique_ptr<Block> make_block(const BlockSpec& spec, const LifParams& lif);
std::unique_ptr<Block> make_encoder(const BottleneckConfig& cfg, const LifParams& lif);
std::unique_ptr<Block> make_decoder(const BottleneckConfig& cfg, const LifParams& lif);

/// A spiking network built from an ArchitectureSpec, optionally carrying one
/// bottleneck unit at a split point.
///
/// The execution sequence is stem, block1..blockN with encoder/decoder spliced
/// in after the bottleneck's split block, then the pooling/FC head. Edge and
/// cloud halves run disjoint ranges of that sequence.
class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  ~Model() = default;

  /// Random weights (seeded), tdBN running statistics at mean 0 / var 1.
  static Model build(const ArchitectureSpec& arch, std::uint64_t seed);

  /// Adds an encoder/decoder after block `split`; the config's in_shape must
  /// equal that block's output. Replaces any existing bottleneck.
  void insert_bottleneck(std::size_t split, const BottleneckConfig& cfg, std::uint64_t seed);
  void remove_bottleneck();

  const ArchitectureSpec& arch() const { return arch_; }
  const std::optional<BottleneckConfig>& bottleneck() const { return bottleneck_; }
  std::size_t bottleneck_split() const { return bottleneck_split_; }

  /// Full inference: image (B, C, H, W) in [0, 1] -> logits (B, classes).
  Tensor infer(const Tensor& image, std::size_t timesteps, SpikeRecorder* recorder = nullptr) const;

  /// Edge half: stem through block `split`, plus the encoder when the
  /// bottleneck sits at `split`. Returns binary spikes.
  Tensor run_edge(const Tensor& image, std::size_t timesteps, std::size_t split,
                  SpikeRecorder* recorder = nullptr) const;
  /// Cloud half: decoder (if any at `split`), remaining blocks, head.
  Tensor run_cloud(const Tensor& spikes, std::size_t split) const;
  /// Shape of the tensor crossing the wire at `split`.
  Shape3 transmitted_shape(std::size_t split) const;

  /// Train-mode forward recording every intermediate for backward().
  Tensor forward_train(const Tensor& image, std::size_t timesteps, const TrainOptions& opts = {});
  /// Replaces tdBN running statistics, layer by layer, with those of `images`.
  /// Gives untrained models realistic spiking activity.
  void calibrate_statistics(const Tensor& images, std::size_t timesteps);

  /// Accumulates gradients for the preceding forward_train.
  void backward(const Tensor& grad_logits);

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  void zero_grad();

  std::size_t sequence_length() const { return sequence_.size(); }
  const Block& block_at(std::size_t position) const { return *sequence_.at(position); }
  const Head& head() const { return head_; }

 private:
  /// Sequence position one past the block for split point `split`.
  std::size_t split_end(std::size_t split) const;
  std::size_t edge_end(std::size_t split) const;

  ArchitectureSpec arch_;
  std::vector<std::unique_ptr<Block>> sequence_;
  Head head_;
  HeadCache head_cache_;
  std::optional<BottleneckConfig> bottleneck_;
  std::size_t bottleneck_split_ = 0;
  bool trained_forward_ = false;
};

}  // namespace spikesplit
