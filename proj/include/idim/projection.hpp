// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace idim {

/// One tile of the Fastfood map: the diagonals of G and B and the permutation Pi.
struct FastfoodBlock {
  std::vector<double> g;           // i.i.d. standard normal
  std::vector<double> b;           // exactly +1 / -1
  std::vector<std::uint32_t> perm; // (Pi x)[i] = x[perm[i]]
  double g_norm = 0.0;             // ||g||_2 > 0
};

/**
 * Seeded structured map R^d -> R^D, M = H G Pi H B per block.
 *
 * The intrinsic vector is zero-padded to n = 2^ceil(log2 d); each of the
 * ceil(D/n) blocks produces n outputs scaled by 1/(sqrt(n) ||g||), so every
 * column of the implied matrix has unit L2 norm before truncation to D rows.
 * Block k draws its randomness from Rng(mix_seed(seed, k)) in the order:
 * n signs for B, Fisher-Yates for Pi, n Box-Muller normals for G.
 *
 * The matrix is never materialized. Immutable after construction.
 */
class FastfoodProjection {
 public:
  FastfoodProjection(std::uint64_t seed, std::size_t d, std::size_t D);

  std::size_t intrinsic_dim() const noexcept { return d_; }
  std::size_t full_dim() const noexcept { return D_; }
  std::size_t block_size() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<FastfoodBlock>& blocks() const noexcept { return blocks_; }

  // out = M x; x.size() == d, out.size() == D.
  void project(std::span<const double> x, std::span<double> out) const;
  void project(std::span<const float> x, std::span<float> out) const;
  // out = M^T y; y.size() == D, out.size() == d.
  void adjoint(std::span<const double> y, std::span<double> out) const;
  void adjoint(std::span<const float> y, std::span<float> out) const;

  std::vector<double> project(std::span<const double> x) const;
  std::vector<double> adjoint(std::span<const double> y) const;

 private:
  template <typename T>
  void project_impl(std::span<const T> x, std::span<T> out) const;
  template <typename T>
  void adjoint_impl(std::span<const T> y, std::span<T> out) const;

  std::uint64_t seed_;
  std::size_t d_;
  std::size_t D_;
  std::size_t n_;
  std::vector<FastfoodBlock> blocks_;
};

FastfoodProjection make_fastfood(std::uint64_t seed, std::size_t d, std::size_t D);

/// Materialized D x d Gaussian map with unit-norm columns. Small-D oracle only.
class DenseProjection {
 public:
  static constexpr std::size_t kDefaultMaxEntries = std::size_t{1} << 24;

  DenseProjection(std::uint64_t seed, std::size_t d, std::size_t D,
                  std::size_t max_entries = kDefaultMaxEntries);

  std::size_t intrinsic_dim() const noexcept { return d_; }
  std::size_t full_dim() const noexcept { return D_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Column-major: entry (row, col) at col * D + row.
  double at(std::size_t row, std::size_t col) const { return matrix_[col * D_ + row]; }

  void project(std::span<const double> x, std::span<double> out) const;
  void adjoint(std::span<const double> y, std::span<double> out) const;
  std::vector<double> project(std::span<const double> x) const;
  std::vector<double> adjoint(std::span<const double> y) const;

 private:
  std::uint64_t seed_;
  std::size_t d_;
  std::size_t D_;
  std::vector<double> matrix_;
};

DenseProjection make_dense(std::uint64_t seed, std::size_t d, std::size_t D);

enum class ProjectionKind { kFastfood, kDense };

std::string to_string(ProjectionKind kind);
ProjectionKind projection_kind_from_string(const std::string& name);

// Everything needed to rebuild a projection: no weights are stored.
struct ProjectionSpec {
  ProjectionKind kind = ProjectionKind::kFastfood;
  std::uint64_t seed = 0;
  std::size_t d = 0;
  std::size_t D = 0;

  bool operator==(const ProjectionSpec&) const = default;
};

// Type-erased handle used by the trainers.
class Projection {
 public:
  explicit Projection(const ProjectionSpec& spec);

  const ProjectionSpec& spec() const noexcept { return spec_; }
  std::size_t intrinsic_dim() const noexcept { return spec_.d; }
  std::size_t full_dim() const noexcept { return spec_.D; }

  void project(std::span<const double> x, std::span<double> out) const;
  void adjoint(std::span<const double> y, std::span<double> out) const;

 private:
  ProjectionSpec spec_;
  std::variant<FastfoodProjection, DenseProjection> impl_;
};

}  // namespace idim
