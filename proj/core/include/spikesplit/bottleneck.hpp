#pragma once

#include <cstdint>

#include "spikesplit/layers.hpp"
#include "spikesplit/tensor.hpp"

namespace spikesplit {

/// Dimensioning of an encoder/decoder pair placed at a split point.
///
/// Encoder: 3x3 conv c -> c' with stride (floor(h/h'), floor(w/w')) and the
/// padding that lands exactly on (h', w'), then tdBN + LIF.
/// Decoder: transposed conv c' -> c with the same stride, center-cropped back
/// to (h, w), then tdBN + LIF.
struct BottleneckConfig {
  Shape3 in_shape;
  Shape3 out_shape;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  ConvSpec encoder;
  DeconvSpec decoder;
  std::size_t timesteps = 1;

  friend bool operator==(const BottleneckConfig&, const BottleneckConfig&) = default;
};

/// Throws ShapeError naming the axis when no 3x3 padding reaches out_shape.
BottleneckConfig make_bottleneck(const Shape3& in_shape, const Shape3& out_shape, std::size_t timesteps);

/// ceil(c' * h' * w' * T / 8): the bit-packed encoder output for one sample.
std::uint64_t spike_payload_bytes(const BottleneckConfig& cfg);

/// c' * h' * w' * element_bytes: the same feature sent as dense elements.
std::uint64_t baseline_payload_bytes(const BottleneckConfig& cfg, std::size_t element_bytes = 1);

__extension__ using Wide = unsigned __int128;

/// Exact element ratio (c*h*w) / (c'*h'*w'); tables print it rounded.
struct CompressionRatio {
  std::uint64_t numerator = 1;
  std::uint64_t denominator = 1;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  std::uint64_t rounded() const { return (2 * numerator + denominator) / (2 * denominator); }

  /// Exact comparison without floating point.
  friend bool operator<(const CompressionRatio& a, const CompressionRatio& b) {
    return static_cast<Wide>(a.numerator) * b.denominator <
           static_cast<Wide>(b.numerator) * a.denominator;
  }
  friend bool operator==(const CompressionRatio& a, const CompressionRatio& b) {
    return static_cast<Wide>(a.numerator) * b.denominator ==
           static_cast<Wide>(b.numerator) * a.denominator;
  }
};

CompressionRatio compression_ratio(const Shape3& in_shape, const Shape3& out_shape);

struct TransmissionReport {
  std::size_t split_point = 0;
  std::size_t timesteps = 0;
  Shape3 original;
  Shape3 compressed;
  std::uint64_t baseline_payload_bytes = 0;
  std::uint64_t spike_payload_bytes = 0;
  CompressionRatio compression_ratio;
};

TransmissionReport transmission_report(const BottleneckConfig& cfg, std::size_t split_point,
                                       std::size_t element_bytes = 1);

}  // namespace spikesplit
