#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spikesplit/tensor.hpp"

namespace spikesplit {

/// Images (N, C, H, W) in [0, 1] with integer labels.
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape3 sample_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
  /// Gathers the listed samples into a (len, C, H, W) batch.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;
  void validate() const;
};

struct BlobTaskSpec {
  Shape3 input{1, 8, 8};
  std::size_t classes = 2;
  std::size_t samples_per_class = 64;
  double sigma = 1.2;        // blob radius in pixels
  double noise = 0.1;        // uniform background noise amplitude
  double jitter = 0.5;       // per-sample blob centre jitter in pixels
  std::uint64_t seed = 1;
};

/// Each class is a Gaussian bump at its own fixed location on a noisy background.
/// Centres sit on a circle around the image centre; samples are interleaved by class.
Dataset make_blob_dataset(const BlobTaskSpec& spec);

enum class CifarLabels { cifar10, cifar100_coarse, cifar100_fine };

/// Reads a CIFAR binary batch file (3x32x32 uint8 planes per record).
Dataset load_cifar_binary(const std::filesystem::path& path, CifarLabels labels,
                          std::optional<std::size_t> limit = std::nullopt);

}  // namespace spikesplit
