#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikesplit/random.hpp"
#include "spikesplit/spike.hpp"
#include "spikesplit/tensor.hpp"

namespace spikesplit {

/// A named learnable tensor (or a non-trainable buffer such as running statistics).
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.dims(), 0.0), trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

/// 2-D convolution geometry. Weights are laid out (out, in / groups, kh, kw).
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t sh = 1, sw = 1;
  std::size_t ph = 0, pw = 0;
  bool depthwise = false;
  bool bias = false;

  std::size_t groups() const { return depthwise ? in_channels : 1; }
  /// Throws ShapeError when the kernel does not fit or channels disagree.
  Shape3 output_shape(const Shape3& in) const;
  /// Multiply-accumulates for one sample at one timestep.
  std::uint64_t macs(const Shape3& in) const;
  std::vector<std::size_t> weight_dims() const;
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Cross-correlation applied independently to every (t, b) slice of a 5-D tensor.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& prefix, ConvSpec spec);

  /// Kaiming-uniform over fan-in: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
  void init(Rng& rng);

  const ConvSpec& spec() const { return spec_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  std::optional<Param>& bias() { return bias_; }
  const std::optional<Param>& bias() const { return bias_; }

  Tensor forward(const Tensor& x) const;
  /// Accumulates weight/bias gradients and returns d(loss)/d(x).
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void collect(std::vector<Param*>& out);

 private:
  ConvSpec spec_;
  Param weight_;
  std::optional<Param> bias_;
};

/// Transposed convolution with an explicit output crop.
///
/// The full output is (in - 1) * stride + kernel; crop_begin rows/cols are
/// dropped at the top/left and crop_end at the bottom/right.
struct DeconvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 3, kw = 3;
  std::size_t sh = 1, sw = 1;
  std::size_t crop_top = 0, crop_left = 0;
  std::size_t crop_bottom = 0, crop_right = 0;

  Shape3 output_shape(const Shape3& in) const;
  std::vector<std::size_t> weight_dims() const { return {in_channels, out_channels, kh, kw}; }

  friend bool operator==(const DeconvSpec&, const DeconvSpec&) = default;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& prefix, DeconvSpec spec);

  void init(Rng& rng);
  const DeconvSpec& spec() const { return spec_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void collect(std::vector<Param*>& out);

 private:
  DeconvSpec spec_;
  Param weight_;
};

/// Convenience wrapper used by tests and the spec-level API.
Tensor conv_forward(const Tensor& x, const Conv2d& conv);

/// Intermediate values kept by a train-mode tdBN pass.
struct TdbnCache {
  Tensor x_hat;
  std::vector<Real> inv_std;
};

/// Threshold-dependent batch norm: y = lambda * alpha * v_th * (x - mu) / sqrt(var + eps) + beta.
///
/// Statistics are taken per channel jointly over (T, B, H, W).
class TdBN {
 public:
  TdBN() = default;
  /// Running statistics start uninitialised; eval mode refuses to run until a
  /// train-mode pass or init_identity_stats() provides them.
  TdBN(const std::string& prefix, std::size_t channels, Real alpha = 1.0, Real v_th = 1.0);

  void init_identity_stats();
  bool stats_ready() const { return stats_ready_; }

  std::size_t channels() const { return channels_; }
  Real alpha() const { return alpha_; }
  Real v_th() const { return v_th_; }
  Real epsilon() const { return epsilon_; }
  Real momentum() const { return momentum_; }
  void set_epsilon(Real eps);
  void set_momentum(Real m) { momentum_ = m; }

  Param& lambda() { return lambda_; }
  Param& beta() { return beta_; }
  Param& running_mean() { return running_mean_; }
  Param& running_var() { return running_var_; }
  const Param& lambda() const { return lambda_; }
  const Param& beta() const { return beta_; }
  const Param& running_mean() const { return running_mean_; }
  const Param& running_var() const { return running_var_; }

  /// Eval mode: normalise with running statistics. Throws StateError if absent.
  Tensor infer(const Tensor& x) const;
  /// Train mode: batch statistics, EMA update of the running ones.
  Tensor forward_train(const Tensor& x, TdbnCache& cache);
  Tensor backward(const TdbnCache& cache, const Tensor& grad_out);

  /// Marks loaded running statistics as usable.
  void mark_stats_ready() { stats_ready_ = true; }

  void collect(std::vector<Param*>& out);

 private:
  std::size_t channels_ = 0;
  Real alpha_ = 1.0;
  Real v_th_ = 1.0;
  Real epsilon_ = 1e-5;
  Real momentum_ = 0.1;
  bool stats_ready_ = false;
  Param lambda_;
  Param beta_;
  Param running_mean_;
  Param running_var_;
};

/// Per-timestep state of a train-mode LIF pass.
struct LifCache {
  Tensor v;      // membrane potential after integration, before reset
  Tensor fired;  // hard threshold crossings, drive the reset
};

/// LIF over (T, B, C, H, W) recording membrane traces for BPTT. With
/// SpikeFn::relaxed_ramp the emitted values are the ramp while resets still
/// follow hard threshold crossings.
Tensor lif_forward_train(const Tensor& current, const LifParams& lif, const SurrogateParams& sg,
                         SpikeFn fn, LifCache& cache);

/// Backprop through time: dL/dv_t = dL/do_t * surrogate(v_t) + dL/dv_{t+1} * tau * (1 - fired_t).
/// The reset factor is treated as a constant.
Tensor lif_backward(const LifCache& cache, const Tensor& grad_spikes, const LifParams& lif,
                    const SurrogateParams& sg);

struct HeadCache {
  Tensor pooled;  // (T, B, C)
  Shape5 in_shape{};
};

/// Global average pool per timestep, fully connected map, mean over time.
class Head {
 public:
  Head() = default;
  Head(const std::string& prefix, std::size_t in_channels, std::size_t classes);

  void init(Rng& rng);
  std::size_t classes() const { return classes_; }
  std::size_t in_channels() const { return in_channels_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

  Tensor infer(const Tensor& spikes) const;
  Tensor forward_train(const Tensor& spikes, HeadCache& cache) const;
  Tensor backward(const HeadCache& cache, const Tensor& grad_logits);

  void collect(std::vector<Param*>& out);

 private:
  std::size_t in_channels_ = 0;
  std::size_t classes_ = 0;
  Param weight_;  // (classes, in_channels)
  Param bias_;    // (classes)
};

/// Pool + FC + temporal mean on packed spikes; returns logits (B, classes).
Tensor avgpool_and_fc(const SpikeTensor& spikes, const Tensor& fc_weight, const Tensor& fc_bias);

}  // namespace spikesplit
