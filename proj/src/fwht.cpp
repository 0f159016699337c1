// SPDX-License-Identifier: Apache-2.0

#include "idim/fwht.hpp"

#include <string>

#include "idim/error.hpp"

namespace idim {
namespace {

void require_power_of_two(std::size_t n) {
  if (!is_power_of_two(n)) {
    throw InvalidDimensionError("Hadamard order must be a power of two, got " +
                                std::to_string(n));
  }
}

template <typename T>
void butterflies(std::span<T> v) {
  const std::size_t n = v.size();
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      T* lo = v.data() + i;
      T* hi = lo + h;
      for (std::size_t j = 0; j < h; ++j) {
        const T a = lo[j];
        const T b = hi[j];
        lo[j] = a + b;
        hi[j] = a - b;
      }
    }
  }
}

}  // namespace

void fwht_inplace(std::span<double> v) {
  require_power_of_two(v.size());
  butterflies(v);
}

void fwht_inplace(std::span<float> v) {
  require_power_of_two(v.size());
  butterflies(v);
}

std::vector<double> naive_hadamard_multiply(std::span<const double> v) {
  const std::size_t n = v.size();
  require_power_of_two(n);

  // Grow H_1 -> H_n by doubling, row-major.
  std::vector<double> h{1.0};
  for (std::size_t size = 1; size < n; size *= 2) {
    std::vector<double> next(4 * size * size);
    const std::size_t w = 2 * size;
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double x = h[r * size + c];
        next[r * w + c] = x;
        next[r * w + c + size] = x;
        next[(r + size) * w + c] = x;
        next[(r + size) * w + c + size] = -x;
      }
    }
    h = std::move(next);
  }

  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += h[r * n + c] * v[c];
    out[r] = acc;
  }
  return out;
}

}  // namespace idim
