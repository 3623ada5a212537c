#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spikesplit/spike.hpp"

namespace spikesplit {

// Frame layout, little-endian:
//   magic[4] version:u8 arch_id:u16 split:u8 T:u8 c:u16 w:u16 h:u16 payload_len:u32
//   payload[payload_len] crc32:u32 (over header and payload)
inline constexpr std::size_t kHeaderBytes = 19;
inline constexpr std::size_t kChecksumBytes = 4;
inline constexpr std::size_t kFrameOverhead = kHeaderBytes + kChecksumBytes;
inline constexpr std::uint8_t kWireVersion = 1;
/// Upper bound accepted for payload_len; larger values are treated as corruption.
inline constexpr std::uint32_t kMaxPayloadBytes = 64u << 20;

enum class FrameKind : std::uint8_t { spikes, logits, error };

inline constexpr std::array<std::uint8_t, 4> kSpikeMagic = {'S', 'B', 'S', 'P'};
inline constexpr std::array<std::uint8_t, 4> kLogitsMagic = {'S', 'B', 'L', 'G'};
inline constexpr std::array<std::uint8_t, 4> kErrorMagic = {'S', 'B', 'E', 'R'};

enum class WireError { bad_magic = 1, version_mismatch = 2, length_mismatch = 3, checksum_failure = 4, truncated = 5 };
std::string_view to_string(WireError e);

class WireFormatError : public std::runtime_error {
 public:
  WireFormatError(WireError code, const std::string& what) : std::runtime_error(what), code_(code) {}
  WireError code() const { return code_; }

 private:
  WireError code_;
};

/// Codes carried in error frames sent by the server.
enum class ProtocolCode : std::uint16_t {
  malformed_frame = 1,
  unknown_model = 2,
  shape_mismatch = 3,
  unexpected_frame = 4,
  internal = 5,
};
std::string_view to_string(ProtocolCode c);

/// One framed message. Spike frames carry c' x h' x w' x T packed bits for a
/// single sample; logits frames carry `c` float32 values (h = w = T = 1); error
/// frames carry a u16 ProtocolCode followed by a UTF-8 message.
struct SpikeFrame {
  FrameKind kind = FrameKind::spikes;
  std::uint8_t version = kWireVersion;
  std::uint16_t arch_id = 0;
  std::uint8_t split_point = 0;
  std::uint8_t timesteps = 0;
  std::uint16_t c = 0;
  std::uint16_t w = 0;
  std::uint16_t h = 0;
  std::vector<std::uint8_t> payload;

  /// Batch-1 spike tensor (T, 1, C, H, W) to frame.
  static SpikeFrame from_spikes(std::uint16_t arch_id, std::size_t split, const SpikeTensor& spikes);
  static SpikeFrame from_logits(std::uint16_t arch_id, std::size_t split, std::span<const float> logits);
  static SpikeFrame from_error(std::uint16_t arch_id, std::size_t split, ProtocolCode code, std::string_view message);

  SpikeTensor spikes() const;
  std::vector<float> logits() const;
  ProtocolCode error_code() const;
  std::string error_message() const;

  /// ceil(c*w*h*T/8) for spike frames, 4*c for logits; error frames are free-form.
  std::optional<std::size_t> expected_payload() const;

  friend bool operator==(const SpikeFrame&, const SpikeFrame&) = default;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const SpikeFrame& frame);
/// Parses exactly one frame occupying all of `bytes`.
SpikeFrame deserialize(std::span<const std::uint8_t> bytes);

/// Total frame size announced by a header prefix, validating magic and version.
/// Returns nullopt when fewer than kHeaderBytes are available.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> prefix);

/// Parses the frame at the start of `stream` and reports its byte length.
SpikeFrame parse_next(std::span<const std::uint8_t> stream, std::size_t& consumed);

/// Splits a concatenation of frames; throws on trailing partial data.
std::vector<SpikeFrame> parse_stream(std::span<const std::uint8_t> stream);

}  // namespace spikesplit
