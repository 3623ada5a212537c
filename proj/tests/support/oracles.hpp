#pragma once

// Naive reference implementations used as independent test oracles.

#include <cstddef>
#include <vector>

#include "spikesplit/layers.hpp"
#include "spikesplit/tensor.hpp"

namespace spikesplit::oracle {

/// Direct six-loop cross-correlation over a (T, B, C, H, W) tensor.
inline Tensor conv(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvSpec& s) {
  const Shape5 in = x.shape5();
  const std::size_t ho = (in.h + 2 * s.ph - s.kh) / s.sh + 1;
  const std::size_t wo = (in.w + 2 * s.pw - s.kw) / s.sw + 1;
  const std::size_t cin_per_group = s.depthwise ? 1 : s.in_channels;
  Tensor y({in.t, in.b, s.out_channels, ho, wo});
  for (std::size_t t = 0; t < in.t; ++t)
    for (std::size_t b = 0; b < in.b; ++b)
      for (std::size_t o = 0; o < s.out_channels; ++o)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t j = 0; j < wo; ++j) {
            double acc = bias ? (*bias)[o] : 0.0;
            for (std::size_t ci = 0; ci < cin_per_group; ++ci) {
              const std::size_t c = s.depthwise ? o : ci;
              for (std::size_t ki = 0; ki < s.kh; ++ki)
                for (std::size_t kj = 0; kj < s.kw; ++kj) {
                  const long r = static_cast<long>(i * s.sh + ki) - static_cast<long>(s.ph);
                  const long q = static_cast<long>(j * s.sw + kj) - static_cast<long>(s.pw);
                  if (r < 0 || q < 0 || r >= static_cast<long>(in.h) || q >= static_cast<long>(in.w)) continue;
                  acc += weight[((o * cin_per_group + ci) * s.kh + ki) * s.kw + kj] *
                         x.at5(t, b, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
                }
            }
            y.at5(t, b, o, i, j) = acc;
          }
  return y;
}

/// Scatter form of the transposed convolution followed by the crop.
inline Tensor deconv(const Tensor& x, const Tensor& weight, const DeconvSpec& s) {
  const Shape5 in = x.shape5();
  const std::size_t hf = (in.h - 1) * s.sh + s.kh;
  const std::size_t wf = (in.w - 1) * s.sw + s.kw;
  Tensor full({in.t, in.b, s.out_channels, hf, wf});
  for (std::size_t t = 0; t < in.t; ++t)
    for (std::size_t b = 0; b < in.b; ++b)
      for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t i = 0; i < in.h; ++i)
          for (std::size_t j = 0; j < in.w; ++j)
            for (std::size_t o = 0; o < s.out_channels; ++o)
              for (std::size_t ki = 0; ki < s.kh; ++ki)
                for (std::size_t kj = 0; kj < s.kw; ++kj)
                  full.at5(t, b, o, i * s.sh + ki, j * s.sw + kj) +=
                      x.at5(t, b, c, i, j) * weight[((c * s.out_channels + o) * s.kh + ki) * s.kw + kj];
  const std::size_t ho = hf - s.crop_top - s.crop_bottom;
  const std::size_t wo = wf - s.crop_left - s.crop_right;
  Tensor y({in.t, in.b, s.out_channels, ho, wo});
  for (std::size_t t = 0; t < in.t; ++t)
    for (std::size_t b = 0; b < in.b; ++b)
      for (std::size_t o = 0; o < s.out_channels; ++o)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t j = 0; j < wo; ++j) y.at5(t, b, o, i, j) = full.at5(t, b, o, i + s.crop_top, j + s.crop_left);
  return y;
}

inline Real dot(const Tensor& a, const Tensor& b) {
  Real acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace spikesplit::oracle
