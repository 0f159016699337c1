// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace idim {

constexpr bool is_power_of_two(std::size_t n) noexcept {
  return n > 0 && (n & (n - 1)) == 0;
}

// Smallest power of two >= n (n >= 1).
constexpr std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/**
 * In-place Fast Walsh-Hadamard Transform: v <- H v, where H is the
 * unnormalized Sylvester-Hadamard matrix
 *
 *   H_1 = [1],  H_{2n} = [[H_n, H_n], [H_n, -H_n]].
 *
 * Iterative radix-2 butterflies; O(n log n) time, O(1) extra space. No 1/sqrt(n)
 * factor is applied, so H H = n I. Length 1 is the identity.
 *
 * Throws InvalidDimensionError unless v.size() is a power of two.
 */
void fwht_inplace(std::span<double> v);
void fwht_inplace(std::span<float> v);

/// Reference H v by materializing H through the Sylvester recursion (O(n^2)).
std::vector<double> naive_hadamard_multiply(std::span<const double> v);

}  // namespace idim
