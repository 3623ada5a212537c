#include "spikesplit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include "spikesplit/error.hpp"
#include "spikesplit/random.hpp"

namespace spikesplit {

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape3 s = sample_shape();
  const std::size_t per = s.numel();
  Tensor out({indices.size(), s.c, s.h, s.w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("sample index out of range");
    std::copy_n(images.data() + indices[i] * per, per, out.data() + i * per);
  }
  return out;
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw ShapeError("dataset images must be (N, C, H, W)");
  if (images.dim(0) != labels.size()) throw ShapeError("dataset has mismatched image and label counts");
  for (std::size_t l : labels) {
    if (l >= classes) throw ValueError("label " + std::to_string(l) + " outside " + std::to_string(classes) + " classes");
  }
}

Dataset make_blob_dataset(const BlobTaskSpec& spec) {
  if (spec.classes < 2) throw ValueError("blob task needs at least two classes");
  if (spec.input.numel() == 0 || spec.samples_per_class == 0) throw ValueError("empty blob task");
  Rng rng(spec.seed);
  const double cy = (static_cast<double>(spec.input.h) - 1) / 2;
  const double cx = (static_cast<double>(spec.input.w) - 1) / 2;
  const double radius = std::min(spec.input.h, spec.input.w) / 4.0;

  Dataset d;
  d.classes = spec.classes;
  const std::size_t n = spec.classes * spec.samples_per_class;
  d.images = Tensor({n, spec.input.c, spec.input.h, spec.input.w});
  d.labels.resize(n);
  Real* px = d.images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % spec.classes;
    d.labels[i] = k;
    const double angle = 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.classes) +
                         std::numbers::pi / 4;
    const double by = cy + radius * std::sin(angle) + spec.jitter * (2 * rng.uniform() - 1);
    const double bx = cx + radius * std::cos(angle) + spec.jitter * (2 * rng.uniform() - 1);
    for (std::size_t c = 0; c < spec.input.c; ++c) {
      for (std::size_t y = 0; y < spec.input.h; ++y) {
        for (std::size_t x = 0; x < spec.input.w; ++x) {
          const double dy = static_cast<double>(y) - by;
          const double dx = static_cast<double>(x) - bx;
          const double v = std::exp(-(dy * dy + dx * dx) / (2 * spec.sigma * spec.sigma)) + spec.noise * rng.uniform();
          *px++ = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return d;
}

Dataset load_cifar_binary(const std::filesystem::path& path, CifarLabels labels, std::optional<std::size_t> limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t label_bytes = labels == CifarLabels::cifar10 ? 1 : 2;
  constexpr std::size_t kPixels = 3 * 32 * 32;
  const std::size_t record = label_bytes + kPixels;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw ValueError(path.string() + " is not a CIFAR binary batch (size " + std::to_string(bytes.size()) + ")");
  }
  std::size_t n = bytes.size() / record;
  if (limit) n = std::min(n, *limit);

  Dataset d;
  d.classes = labels == CifarLabels::cifar10 ? 10 : labels == CifarLabels::cifar100_coarse ? 20 : 100;
  d.images = Tensor({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* r = bytes.data() + i * record;
    d.labels[i] = labels == CifarLabels::cifar100_fine ? r[1] : r[0];
    for (std::size_t p = 0; p < kPixels; ++p) d.images[i * kPixels + p] = r[label_bytes + p] / 255.0;
  }
  d.validate();
  return d;
}

}  // namespace spikesplit
