#include "spikesplit/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

#include <zlib.h>

#include "spikesplit/error.hpp"

namespace spikesplit {

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

const std::array<std::uint8_t, 4>& magic_for(FrameKind k) {
  switch (k) {
    case FrameKind::spikes: return kSpikeMagic;
    case FrameKind::logits: return kLogitsMagic;
    case FrameKind::error: return kErrorMagic;
  }
  throw std::logic_error("bad frame kind");
}

FrameKind kind_for(const std::uint8_t* p) {
  auto eq = [p](const std::array<std::uint8_t, 4>& m) { return std::equal(m.begin(), m.end(), p); };
  if (eq(kSpikeMagic)) return FrameKind::spikes;
  if (eq(kLogitsMagic)) return FrameKind::logits;
  if (eq(kErrorMagic)) return FrameKind::error;
  throw WireFormatError(WireError::bad_magic, "bad frame magic");
}

template <typename T>
T narrow(std::size_t v, const char* field) {
  if (v > std::numeric_limits<T>::max()) throw ValueError(std::string(field) + " does not fit the frame header");
  return static_cast<T>(v);
}

}  // namespace

std::string_view to_string(WireError e) {
  switch (e) {
    case WireError::bad_magic: return "bad_magic";
    case WireError::version_mismatch: return "version_mismatch";
    case WireError::length_mismatch: return "length_mismatch";
    case WireError::checksum_failure: return "checksum_failure";
    case WireError::truncated: return "truncated";
  }
  return "unknown";
}

std::string_view to_string(ProtocolCode c) {
  switch (c) {
    case ProtocolCode::malformed_frame: return "malformed_frame";
    case ProtocolCode::unknown_model: return "unknown_model";
    case ProtocolCode::shape_mismatch: return "shape_mismatch";
    case ProtocolCode::unexpected_frame: return "unexpected_frame";
    case ProtocolCode::internal: return "internal";
  }
  return "unknown";
}

SpikeFrame SpikeFrame::from_spikes(std::uint16_t arch_id, std::size_t split, const SpikeTensor& spikes) {
  const Shape5 s = spikes.shape();
  if (s.b != 1) throw ShapeError("spike frames carry batch 1, got batch " + std::to_string(s.b));
  SpikeFrame f;
  f.kind = FrameKind::spikes;
  f.arch_id = arch_id;
  f.split_point = narrow<std::uint8_t>(split, "split point");
  f.timesteps = narrow<std::uint8_t>(s.t, "timesteps");
  f.c = narrow<std::uint16_t>(s.c, "channels");
  f.h = narrow<std::uint16_t>(s.h, "height");
  f.w = narrow<std::uint16_t>(s.w, "width");
  f.payload.assign(spikes.bytes().begin(), spikes.bytes().end());
  return f;
}

SpikeFrame SpikeFrame::from_logits(std::uint16_t arch_id, std::size_t split, std::span<const float> logits) {
  SpikeFrame f;
  f.kind = FrameKind::logits;
  f.arch_id = arch_id;
  f.split_point = narrow<std::uint8_t>(split, "split point");
  f.timesteps = 1;
  f.c = narrow<std::uint16_t>(logits.size(), "class count");
  f.h = 1;
  f.w = 1;
  f.payload.reserve(logits.size() * 4);
  for (float v : logits) put32(f.payload, std::bit_cast<std::uint32_t>(v));
  return f;
}

SpikeFrame SpikeFrame::from_error(std::uint16_t arch_id, std::size_t split, ProtocolCode code,
                                  std::string_view message) {
  SpikeFrame f;
  f.kind = FrameKind::error;
  f.arch_id = arch_id;
  f.split_point = static_cast<std::uint8_t>(std::min<std::size_t>(split, 255));
  put16(f.payload, static_cast<std::uint16_t>(code));
  f.payload.insert(f.payload.end(), message.begin(), message.end());
  return f;
}

std::optional<std::size_t> SpikeFrame::expected_payload() const {
  switch (kind) {
    case FrameKind::spikes:
      return (static_cast<std::size_t>(c) * w * h * timesteps + 7) / 8;
    case FrameKind::logits:
      return static_cast<std::size_t>(c) * 4;
    case FrameKind::error:
      return std::nullopt;
  }
  return std::nullopt;
}

SpikeTensor SpikeFrame::spikes() const {
  if (kind != FrameKind::spikes) throw std::logic_error("not a spike frame");
  return SpikeTensor::from_bytes(Shape5{timesteps, 1, c, h, w}, payload);
}

std::vector<float> SpikeFrame::logits() const {
  if (kind != FrameKind::logits) throw std::logic_error("not a logits frame");
  if (payload.size() != static_cast<std::size_t>(c) * 4) {
    throw WireFormatError(WireError::length_mismatch, "logits payload size disagrees with class count");
  }
  std::vector<float> out(c);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get32(payload.data() + 4 * i));
  return out;
}

ProtocolCode SpikeFrame::error_code() const {
  if (kind != FrameKind::error) throw std::logic_error("not an error frame");
  if (payload.size() < 2) return ProtocolCode::internal;
  return static_cast<ProtocolCode>(get16(payload.data()));
}

std::string SpikeFrame::error_message() const {
  if (kind != FrameKind::error) throw std::logic_error("not an error frame");
  if (payload.size() < 2) return {};
  return std::string(payload.begin() + 2, payload.end());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large inputs.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> serialize(const SpikeFrame& frame) {
  if (const auto expected = frame.expected_payload(); expected && *expected != frame.payload.size()) {
    throw WireFormatError(WireError::length_mismatch, "payload has " + std::to_string(frame.payload.size()) +
                                                          " bytes, header implies " + std::to_string(*expected));
  }
  if (frame.payload.size() > kMaxPayloadBytes) {
    throw WireFormatError(WireError::length_mismatch, "payload exceeds the frame size limit");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFrameOverhead + frame.payload.size());
  const auto& magic = magic_for(frame.kind);
  out.insert(out.end(), magic.begin(), magic.end());
  out.push_back(frame.version);
  put16(out, frame.arch_id);
  out.push_back(frame.split_point);
  out.push_back(frame.timesteps);
  put16(out, frame.c);
  put16(out, frame.w);
  put16(out, frame.h);
  put32(out, static_cast<std::uint32_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  put32(out, crc32(out));
  return out;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> prefix) {
  if (prefix.size() < kHeaderBytes) return std::nullopt;
  kind_for(prefix.data());
  if (prefix[4] != kWireVersion) {
    throw WireFormatError(WireError::version_mismatch,
                          "frame version " + std::to_string(prefix[4]) + ", expected " + std::to_string(kWireVersion));
  }
  const std::uint32_t len = get32(prefix.data() + 15);
  if (len > kMaxPayloadBytes) throw WireFormatError(WireError::length_mismatch, "payload length exceeds limit");
  return kFrameOverhead + len;
}

SpikeFrame parse_next(std::span<const std::uint8_t> stream, std::size_t& consumed) {
  const auto total = frame_size(stream);
  if (!total) throw WireFormatError(WireError::truncated, "incomplete frame header");
  if (stream.size() < *total) throw WireFormatError(WireError::truncated, "incomplete frame body");
  const std::uint8_t* p = stream.data();
  const std::size_t body = *total - kChecksumBytes;
  if (crc32(stream.first(body)) != get32(p + body)) {
    throw WireFormatError(WireError::checksum_failure, "frame checksum mismatch");
  }
  SpikeFrame f;
  f.kind = kind_for(p);
  f.version = p[4];
  f.arch_id = get16(p + 5);
  f.split_point = p[7];
  f.timesteps = p[8];
  f.c = get16(p + 9);
  f.w = get16(p + 11);
  f.h = get16(p + 13);
  f.payload.assign(p + kHeaderBytes, p + body);
  if (const auto expected = f.expected_payload(); expected && *expected != f.payload.size()) {
    throw WireFormatError(WireError::length_mismatch, "payload_len " + std::to_string(f.payload.size()) +
                                                          " disagrees with dims (expected " +
                                                          std::to_string(*expected) + ")");
  }
  if (f.kind == FrameKind::spikes && f.payload.size() * 8 != static_cast<std::size_t>(f.c) * f.w * f.h * f.timesteps) {
    // Pad bits must be zero for the payload to be canonical.
    try {
      f.spikes();
    } catch (const ValueError& e) {
      throw WireFormatError(WireError::length_mismatch, e.what());
    }
  }
  consumed = *total;
  return f;
}

SpikeFrame deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  SpikeFrame f = parse_next(bytes, consumed);
  if (consumed != bytes.size()) {
    throw WireFormatError(WireError::length_mismatch, std::to_string(bytes.size() - consumed) +
                                                          " trailing bytes after frame");
  }
  return f;
}

std::vector<SpikeFrame> parse_stream(std::span<const std::uint8_t> stream) {
  std::vector<SpikeFrame> out;
  std::size_t off = 0;
  while (off < stream.size()) {
    std::size_t consumed = 0;
    out.push_back(parse_next(stream.subspan(off), consumed));
    off += consumed;
  }
  return out;
}

}  // namespace spikesplit
