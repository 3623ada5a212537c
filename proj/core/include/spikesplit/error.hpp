#pragma once

#include <stdexcept>
#include <string>

namespace spikesplit {

/// Tensor shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside its domain: non-binary spikes, non-finite currents, fr > 1, ...
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation called on an object that is not in the required state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace spikesplit
