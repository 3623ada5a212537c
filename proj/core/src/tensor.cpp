#include "spikesplit/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace spikesplit {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string to_string(const Shape3& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

Shape3 parse_shape3(const std::string& text) {
  std::size_t parts[3] = {0, 0, 0};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, parts[i]);
    if (ec != std::errc() || parts[i] == 0) {
      throw std::invalid_argument("malformed shape '" + text + "', expected CxHxW");
    }
    p = next;
    if (i < 2) {
      if (p == end || (*p != 'x' && *p != 'X')) {
        throw std::invalid_argument("malformed shape '" + text + "', expected CxHxW");
      }
      ++p;
    }
  }
  if (p != end) {
    throw std::invalid_argument("trailing characters in shape '" + text + "'");
  }
  return {parts[0], parts[1], parts[2]};
}

std::string to_string(const Shape5& s) {
  return "(" + std::to_string(s.t) + "," + std::to_string(s.b) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

std::string dims_to_string(const std::vector<std::size_t>& dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

Tensor::Tensor(std::vector<std::size_t> dims, Real fill)
    : dims_(std::move(dims)), data_(product(dims_), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<Real> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (product(dims_) != data_.size()) {
    throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                " does not match dims " + dims_to_string(dims_));
  }
}

Shape5 Tensor::shape5() const {
  if (dims_.size() != 5) {
    throw std::invalid_argument("expected a rank-5 (T,B,C,H,W) tensor, got " + dims_to_string(dims_));
  }
  return {dims_[0], dims_[1], dims_[2], dims_[3], dims_[4]};
}

Real& Tensor::at5(std::size_t t, std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
  return data_[(((t * dims_[1] + b) * dims_[2] + c) * dims_[3] + h) * dims_[4] + w];
}

Real Tensor::at5(std::size_t t, std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[(((t * dims_[1] + b) * dims_[2] + c) * dims_[3] + h) * dims_[4] + w];
}

Tensor Tensor::reshaped(std::vector<std::size_t> dims) const {
  return Tensor(std::move(dims), data_);
}

Tensor Tensor::slice0(std::size_t index) const {
  if (dims_.empty() || index >= dims_[0]) throw std::out_of_range("slice index out of range");
  std::vector<std::size_t> sub(dims_.begin() + 1, dims_.end());
  const std::size_t n = product(sub);
  return Tensor(std::move(sub),
                std::vector<Real>(data_.begin() + static_cast<std::ptrdiff_t>(index * n),
                                  data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * n)));
}

void Tensor::set_slice0(std::size_t index, const Tensor& value) {
  if (dims_.empty() || index >= dims_[0]) throw std::out_of_range("slice index out of range");
  if (!std::equal(dims_.begin() + 1, dims_.end(), value.dims_.begin(), value.dims_.end())) {
    throw std::invalid_argument("slice shape " + dims_to_string(value.dims_) + " does not fit " +
                                dims_to_string(dims_));
  }
  std::copy(value.data_.begin(), value.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(index * value.numel()));
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.dims_ != dims_) {
    throw std::invalid_argument("shape mismatch in +=: " + dims_to_string(dims_) + " vs " +
                                dims_to_string(other.dims_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real k) {
  for (auto& v : data_) v *= k;
  return *this;
}

}  // namespace spikesplit
