#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace deepaer {

// Feature-map plane of one layer: `channels` maps of `length` samples each,
// stored channel-major (data[c * length + j]).
template <typename T>
struct Tensor1D {
  int channels = 0;
  int length = 0;
  std::vector<T> data;

  Tensor1D() = default;
  Tensor1D(int channels_, int length_)
      : channels(channels_), length(length_),
        data(static_cast<std::size_t>(channels_) * length_, T(0)) {}

  std::size_t size() const { return data.size(); }

  T* row(int c) { return data.data() + static_cast<std::size_t>(c) * length; }
  const T* row(int c) const { return data.data() + static_cast<std::size_t>(c) * length; }

  T& at(int c, int j) { return data[static_cast<std::size_t>(c) * length + j]; }
  T at(int c, int j) const { return data[static_cast<std::size_t>(c) * length + j]; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

}  // namespace deepaer
