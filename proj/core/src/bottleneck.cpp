#include "spikesplit/bottleneck.hpp"

#include <array>
#include <string>

#include "spikesplit/error.hpp"

namespace spikesplit {

namespace {

constexpr std::size_t kKernel = 3;

struct AxisPlan {
  std::size_t stride;
  std::size_t enc_pad;
  std::size_t dec_kernel;
  std::size_t crop_begin;
  std::size_t crop_end;
};

AxisPlan plan_axis(std::size_t in, std::size_t out, const char* axis) {
  if (out == 0 || in == 0) throw ShapeError(std::string("bottleneck ") + axis + " must be >= 1");
  if (out > in) {
    throw ShapeError(std::string("bottleneck cannot grow ") + axis + ": " + std::to_string(in) + " -> " +
                     std::to_string(out));
  }
  AxisPlan p{};
  p.stride = in / out;
  bool found = false;
  for (std::size_t pad : std::array<std::size_t, 3>{1, 0, 2}) {
    if (in + 2 * pad < kKernel) continue;
    if ((in + 2 * pad - kKernel) / p.stride + 1 == out) {
      p.enc_pad = pad;
      found = true;
      break;
    }
  }
  if (!found) {
    throw ShapeError(std::string("no 3x3 padding maps ") + axis + " " + std::to_string(in) + " to " +
                     std::to_string(out) + " with stride " + std::to_string(p.stride));
  }
  const std::size_t reach = (out - 1) * p.stride;
  p.dec_kernel = reach + kKernel >= in ? kKernel : in - reach;
  const std::size_t excess = reach + p.dec_kernel - in;
  p.crop_begin = excess / 2;
  p.crop_end = excess - excess / 2;
  return p;
}

}  // namespace

BottleneckConfig make_bottleneck(const Shape3& in_shape, const Shape3& out_shape, std::size_t timesteps) {
  if (timesteps < 1) throw ValueError("bottleneck timesteps must be >= 1");
  if (out_shape.c == 0 || out_shape.c > in_shape.c) {
    throw ShapeError("bottleneck channels must satisfy 1 <= c' <= c (" + std::to_string(out_shape.c) + " vs " +
                     std::to_string(in_shape.c) + ")");
  }
  const AxisPlan ph = plan_axis(in_shape.h, out_shape.h, "height");
  const AxisPlan pw = plan_axis(in_shape.w, out_shape.w, "width");

  BottleneckConfig cfg;
  cfg.in_shape = in_shape;
  cfg.out_shape = out_shape;
  cfg.stride_h = ph.stride;
  cfg.stride_w = pw.stride;
  cfg.timesteps = timesteps;
  cfg.encoder = ConvSpec{in_shape.c, out_shape.c, kKernel, kKernel, ph.stride, pw.stride, ph.enc_pad, pw.enc_pad};
  cfg.decoder = DeconvSpec{out_shape.c, in_shape.c, ph.dec_kernel, pw.dec_kernel, ph.stride, pw.stride,
                           ph.crop_begin, pw.crop_begin, ph.crop_end, pw.crop_end};
  if (cfg.encoder.output_shape(in_shape) != out_shape || cfg.decoder.output_shape(out_shape) != in_shape) {
    throw ShapeError("bottleneck dimensioning failed for " + to_string(in_shape) + " -> " + to_string(out_shape));
  }
  return cfg;
}

std::uint64_t spike_payload_bytes(const BottleneckConfig& cfg) {
  return (static_cast<std::uint64_t>(cfg.out_shape.numel()) * cfg.timesteps + 7) / 8;
}

std::uint64_t baseline_payload_bytes(const BottleneckConfig& cfg, std::size_t element_bytes) {
  return static_cast<std::uint64_t>(cfg.out_shape.numel()) * element_bytes;
}

CompressionRatio compression_ratio(const Shape3& in_shape, const Shape3& out_shape) {
  if (in_shape.numel() == 0 || out_shape.numel() == 0) throw ShapeError("compression ratio of an empty shape");
  return {in_shape.numel(), out_shape.numel()};
}

TransmissionReport transmission_report(const BottleneckConfig& cfg, std::size_t split_point,
                                       std::size_t element_bytes) {
  return {split_point,
          cfg.timesteps,
          cfg.in_shape,
          cfg.out_shape,
          baseline_payload_bytes(cfg, element_bytes),
          spike_payload_bytes(cfg),
          compression_ratio(cfg.in_shape, cfg.out_shape)};
}

}  // namespace spikesplit
