#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spikesplit {

using Real = double;

/// Channel/height/width triple describing one sample's feature map.
struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return c * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Formats as "CxHxW", the notation used in split tables.
std::string to_string(const Shape3& s);
/// Parses "CxHxW"; throws std::invalid_argument on malformed text.
Shape3 parse_shape3(const std::string& text);

/// (T, B, C, H, W) layout shared by spike and current tensors.
struct Shape5 {
  std::size_t t = 0;
  std::size_t b = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return t * b * c * h * w; }
  Shape3 feature() const { return {c, h, w}; }
  friend bool operator==(const Shape5&, const Shape5&) = default;
};

std::string to_string(const Shape5& s);

/// Dense row-major real tensor of arbitrary rank.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, Real fill = 0);
  Tensor(std::vector<std::size_t> dims, std::vector<Real> data);

  static Tensor of(const Shape5& s, Real fill = 0) { return Tensor({s.t, s.b, s.c, s.h, s.w}, fill); }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Interprets a rank-5 tensor as (T, B, C, H, W).
  Shape5 shape5() const;

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at5(std::size_t t, std::size_t b, std::size_t c, std::size_t h, std::size_t w);
  Real at5(std::size_t t, std::size_t b, std::size_t c, std::size_t h, std::size_t w) const;

  /// Same data, new dims; element count must match.
  Tensor reshaped(std::vector<std::size_t> dims) const;

  /// Contiguous slice along the leading axis (e.g. one timestep).
  Tensor slice0(std::size_t index) const;
  void set_slice0(std::size_t index, const Tensor& value);

  void fill(Real v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(Real k);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<Real> data_;
};

std::string dims_to_string(const std::vector<std::size_t>& dims);

}  // namespace spikesplit
