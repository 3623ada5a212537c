#include "spikesplit/spike.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "spikesplit/error.hpp"

namespace spikesplit {

SpikeTensor::SpikeTensor(Shape5 shape) : shape_(shape), bytes_(packed_bytes(shape), 0) {}

SpikeTensor SpikeTensor::pack(const Tensor& spikes) {
  SpikeTensor out(spikes.shape5());
  const Real* src = spikes.data();
  const std::size_t n = spikes.numel();
  for (std::size_t k = 0; k < n; ++k) {
    const Real v = src[k];
    if (v == 1.0) {
      out.bytes_[k >> 3] |= static_cast<std::uint8_t>(1U << (k & 7));
    } else if (v != 0.0) {
      throw ValueError("cannot pack non-binary value " + std::to_string(v) + " at element " +
                       std::to_string(k));
    }
  }
  return out;
}

SpikeTensor SpikeTensor::from_bytes(Shape5 shape, std::vector<std::uint8_t> bytes) {
  if (bytes.size() != packed_bytes(shape)) {
    throw ShapeError("spike payload of " + std::to_string(bytes.size()) + " bytes does not match shape " +
                     to_string(shape) + " (" + std::to_string(packed_bytes(shape)) + " bytes)");
  }
  const std::size_t tail = shape.numel() & 7;
  if (tail != 0 && (bytes.back() >> tail) != 0) {
    throw ValueError("spike payload has non-zero pad bits");
  }
  SpikeTensor out;
  out.shape_ = shape;
  out.bytes_ = std::move(bytes);
  return out;
}

Tensor SpikeTensor::unpack() const {
  Tensor out = Tensor::of(shape_);
  Real* dst = out.data();
  const std::size_t n = numel();
  for (std::size_t k = 0; k < n; ++k) dst[k] = get(k) ? 1.0 : 0.0;
  return out;
}

void SpikeTensor::set(std::size_t flat_index, bool on) {
  const auto mask = static_cast<std::uint8_t>(1U << (flat_index & 7));
  if (on) {
    bytes_[flat_index >> 3] |= mask;
  } else {
    bytes_[flat_index >> 3] &= static_cast<std::uint8_t>(~mask);
  }
}

std::size_t SpikeTensor::count_ones() const {
  return std::accumulate(bytes_.begin(), bytes_.end(), std::size_t{0},
                         [](std::size_t acc, std::uint8_t b) { return acc + std::popcount(b); });
}

void LifParams::validate() const {
  if (!(tau_decay >= 0.0 && tau_decay <= 1.0)) {
    throw ValueError("tau_decay must lie in [0, 1], got " + std::to_string(tau_decay));
  }
  if (!(v_th > 0.0) || !std::isfinite(v_th)) {
    throw ValueError("v_th must be positive, got " + std::to_string(v_th));
  }
}

LifState LifState::zeros(std::vector<std::size_t> dims) {
  return {Tensor(dims, 0.0), Tensor(dims, 0.0)};
}

LifStepResult lif_step(const LifState& state, const Tensor& input, const LifParams& params) {
  params.validate();
  if (state.v.dims() != input.dims() || state.last_spike.dims() != input.dims()) {
    throw ShapeError("lif_step: state " + dims_to_string(state.v.dims()) + " vs input " +
                     dims_to_string(input.dims()));
  }
  if (!input.all_finite()) throw ValueError("lif_step: non-finite input current");

  LifStepResult r{{Tensor(input.dims()), Tensor(input.dims())}, Tensor(input.dims())};
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const Real carry = params.tau_decay * state.v[i] * (1.0 - state.last_spike[i]);
    const Real v = carry + input[i];
    const Real s = v > params.v_th ? 1.0 : 0.0;
    r.state.v[i] = v;
    r.state.last_spike[i] = s;
    r.spikes[i] = s;
  }
  return r;
}

Tensor lif_forward(const Tensor& current, const LifParams& params) {
  params.validate();
  const Shape5 s = current.shape5();
  if (!current.all_finite()) throw ValueError("lif_forward: non-finite input current");
  const std::size_t slice = s.b * s.c * s.h * s.w;
  Tensor out(current.dims());
  std::vector<Real> v(slice, 0.0);
  std::vector<Real> fired(slice, 0.0);
  for (std::size_t t = 0; t < s.t; ++t) {
    const Real* in = current.data() + t * slice;
    Real* o = out.data() + t * slice;
    for (std::size_t i = 0; i < slice; ++i) {
      v[i] = params.tau_decay * v[i] * (1.0 - fired[i]) + in[i];
      fired[i] = v[i] > params.v_th ? 1.0 : 0.0;
      o[i] = fired[i];
    }
  }
  return out;
}

Tensor encode_static(const Tensor& image, std::size_t timesteps) {
  if (timesteps < 1) throw ValueError("encode_static: timesteps must be >= 1");
  if (image.rank() != 4) {
    throw ShapeError("encode_static expects a (B,C,H,W) image, got " + dims_to_string(image.dims()));
  }
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const Real v = image[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("encode_static: pixel " + std::to_string(i) + " = " + std::to_string(v) +
                       " outside [0, 1]");
    }
  }
  std::vector<std::size_t> dims{timesteps};
  dims.insert(dims.end(), image.dims().begin(), image.dims().end());
  Tensor out(dims);
  for (std::size_t t = 0; t < timesteps; ++t) out.set_slice0(t, image);
  return out;
}

void SurrogateParams::validate() const {
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw ValueError("surrogate width must be positive, got " + std::to_string(width));
  }
}

Real surrogate_grad(Real v, const LifParams& lif, const SurrogateParams& sg) {
  return std::abs(v - lif.v_th) <= sg.width / 2 ? 1.0 / sg.width : 0.0;
}

Real spike_value(Real v, const LifParams& lif, const SurrogateParams& sg, SpikeFn fn) {
  if (fn == SpikeFn::heaviside) return v > lif.v_th ? 1.0 : 0.0;
  return std::clamp((v - lif.v_th) / sg.width + 0.5, 0.0, 1.0);
}

}  // namespace spikesplit
