#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spikesplit/tensor.hpp"

namespace spikesplit {

/// Binary activations of shape (T, B, C, H, W), stored one bit per element.
///
/// Bit k of the row-major flattened stream lives in byte k / 8 at bit
/// position k % 8 (LSB first). Trailing pad bits are always zero, so two
/// tensors with equal elements have identical byte payloads.
class SpikeTensor {
 public:
  SpikeTensor() = default;
  explicit SpikeTensor(Shape5 shape);

  /// Packs a tensor whose elements are exactly 0 or 1. Throws ValueError otherwise.
  static SpikeTensor pack(const Tensor& spikes);
  /// Adopts an already packed payload. Throws if the size or pad bits are wrong.
  static SpikeTensor from_bytes(Shape5 shape, std::vector<std::uint8_t> bytes);

  static std::size_t packed_bytes(const Shape5& shape) { return (shape.numel() + 7) / 8; }

  Tensor unpack() const;

  const Shape5& shape() const { return shape_; }
  std::size_t numel() const { return shape_.numel(); }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

  bool get(std::size_t flat_index) const {
    return (bytes_[flat_index >> 3] >> (flat_index & 7)) & 1U;
  }
  void set(std::size_t flat_index, bool on);

  std::size_t count_ones() const;

  friend bool operator==(const SpikeTensor&, const SpikeTensor&) = default;

 private:
  Shape5 shape_{};
  std::vector<std::uint8_t> bytes_;
};

/// Leaky integrate-and-fire constants.
struct LifParams {
  Real tau_decay = 0.5;
  Real v_th = 1.0;

  void validate() const;
};

/// Membrane potentials and previous spikes for one timestep slice (B, C, H, W).
struct LifState {
  Tensor v;
  Tensor last_spike;

  static LifState zeros(std::vector<std::size_t> dims);
};

struct LifStepResult {
  LifState state;
  Tensor spikes;
};

/// One Euler step: v' = tau * v * (1 - last_spike) + input; spike = [v' > v_th].
LifStepResult lif_step(const LifState& state, const Tensor& input, const LifParams& params);

/// Runs lif_step over the leading time axis of a (T, B, C, H, W) current, starting from rest.
Tensor lif_forward(const Tensor& current, const LifParams& params);

/// Replicates a static image (B, C, H, W) with values in [0, 1] over T timesteps.
Tensor encode_static(const Tensor& image, std::size_t timesteps);

/// Rectangular surrogate window width.
struct SurrogateParams {
  Real width = 1.0;

  void validate() const;
};

/// d(spike)/dv stand-in: 1/a inside |v - v_th| <= a/2, zero outside.
Real surrogate_grad(Real v, const LifParams& lif, const SurrogateParams& sg);

/// Forward nonlinearity used by the training path. The relaxed variant replaces
/// the step with the ramp whose derivative is exactly the surrogate window; it
/// exists for gradient verification.
enum class SpikeFn { heaviside, relaxed_ramp };

Real spike_value(Real v, const LifParams& lif, const SurrogateParams& sg, SpikeFn fn);

}  // namespace spikesplit
