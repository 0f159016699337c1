// SPDX-License-Identifier: Apache-2.0

#include "idim/projection.hpp"

#include <cmath>
#include <numeric>

#include "idim/error.hpp"
#include "idim/fwht.hpp"
#include "idim/rng.hpp"

namespace idim {
namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidDimensionError(std::string(what) + ": expected length " +
                                std::to_string(want) + ", got " + std::to_string(got));
  }
}

FastfoodBlock draw_block(std::uint64_t stream_seed, std::size_t n) {
  Rng rng(stream_seed);
  FastfoodBlock block;
  block.b.resize(n);
  for (auto& s : block.b) s = rng.sign();
  block.perm.resize(n);
  std::iota(block.perm.begin(), block.perm.end(), 0u);
  rng.shuffle(std::span<std::uint32_t>(block.perm));
  block.g.resize(n);
  // An all-zero draw has probability zero; redraw from the same stream if it happens.
  while (block.g_norm == 0.0) {
    double sq = 0.0;
    for (auto& v : block.g) {
      v = rng.normal();
      sq += v * v;
    }
    block.g_norm = std::sqrt(sq);
  }
  return block;
}

}  // namespace

FastfoodProjection::FastfoodProjection(std::uint64_t seed, std::size_t d, std::size_t D)
    : seed_(seed), d_(d), D_(D), n_(0) {
  if (d == 0 || D == 0) {
    throw InvalidDimensionError("fastfood projection needs d >= 1 and D >= 1 (got d=" +
                                std::to_string(d) + ", D=" + std::to_string(D) + ")");
  }
  n_ = next_power_of_two(d);
  const std::size_t num_blocks = (D + n_ - 1) / n_;
  blocks_.reserve(num_blocks);
  for (std::size_t k = 0; k < num_blocks; ++k) {
    blocks_.push_back(draw_block(mix_seed(seed, k), n_));
  }
}

template <typename T>
void FastfoodProjection::project_impl(std::span<const T> x, std::span<T> out) const {
  require_size(x.size(), d_, "fastfood project input");
  require_size(out.size(), D_, "fastfood project output");
  std::vector<T> buf(n_);
  std::vector<T> tmp(n_);
  const double root_n = std::sqrt(static_cast<double>(n_));
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const FastfoodBlock& blk = blocks_[k];
    for (std::size_t i = 0; i < n_; ++i) {
      buf[i] = i < d_ ? static_cast<T>(blk.b[i]) * x[i] : T(0);
    }
    fwht_inplace(std::span<T>(buf));
    for (std::size_t i = 0; i < n_; ++i) {
      tmp[i] = static_cast<T>(blk.g[i]) * buf[blk.perm[i]];
    }
    fwht_inplace(std::span<T>(tmp));
    const T scale = static_cast<T>(1.0 / (root_n * blk.g_norm));
    const std::size_t base = k * n_;
    const std::size_t count = std::min(n_, D_ - base);
    for (std::size_t i = 0; i < count; ++i) out[base + i] = scale * tmp[i];
  }
}

template <typename T>
void FastfoodProjection::adjoint_impl(std::span<const T> y, std::span<T> out) const {
  require_size(y.size(), D_, "fastfood adjoint input");
  require_size(out.size(), d_, "fastfood adjoint output");
  std::vector<T> buf(n_);
  std::vector<T> tmp(n_);
  std::fill(out.begin(), out.end(), T(0));
  const double root_n = std::sqrt(static_cast<double>(n_));
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const FastfoodBlock& blk = blocks_[k];
    const std::size_t base = k * n_;
    const std::size_t count = std::min(n_, D_ - base);
    for (std::size_t i = 0; i < n_; ++i) buf[i] = i < count ? y[base + i] : T(0);
    fwht_inplace(std::span<T>(buf));
    for (std::size_t i = 0; i < n_; ++i) {
      tmp[blk.perm[i]] = static_cast<T>(blk.g[i]) * buf[i];
    }
    fwht_inplace(std::span<T>(tmp));
    const T scale = static_cast<T>(1.0 / (root_n * blk.g_norm));
    for (std::size_t i = 0; i < d_; ++i) {
      out[i] += scale * static_cast<T>(blk.b[i]) * tmp[i];
    }
  }
}

void FastfoodProjection::project(std::span<const double> x, std::span<double> out) const {
  project_impl(x, out);
}
void FastfoodProjection::project(std::span<const float> x, std::span<float> out) const {
  project_impl(x, out);
}
void FastfoodProjection::adjoint(std::span<const double> y, std::span<double> out) const {
  adjoint_impl(y, out);
}
void FastfoodProjection::adjoint(std::span<const float> y, std::span<float> out) const {
  adjoint_impl(y, out);
}

std::vector<double> FastfoodProjection::project(std::span<const double> x) const {
  std::vector<double> out(D_);
  project_impl(x, std::span<double>(out));
  return out;
}

std::vector<double> FastfoodProjection::adjoint(std::span<const double> y) const {
  std::vector<double> out(d_);
  adjoint_impl(y, std::span<double>(out));
  return out;
}

FastfoodProjection make_fastfood(std::uint64_t seed, std::size_t d, std::size_t D) {
  return FastfoodProjection(seed, d, D);
}

DenseProjection::DenseProjection(std::uint64_t seed, std::size_t d, std::size_t D,
                                 std::size_t max_entries)
    : seed_(seed), d_(d), D_(D) {
  if (d == 0 || D == 0) {
    throw InvalidDimensionError("dense projection needs d >= 1 and D >= 1");
  }
  if (d > max_entries / D) {
    throw CapacityError("dense projection of " + std::to_string(D) + " x " +
                        std::to_string(d) + " exceeds the cap of " +
                        std::to_string(max_entries) +
                        " entries; dense maps do not scale (d=1000 for a 355M-parameter "
                        "model already needs 1.42 TB), use the fastfood projection");
  }
  matrix_.resize(d * D);
  Rng rng(mix_seed(seed, 0));
  for (std::size_t col = 0; col < d; ++col) {
    double* c = matrix_.data() + col * D;
    double sq = 0.0;
    while (sq == 0.0) {
      for (std::size_t row = 0; row < D; ++row) {
        c[row] = rng.normal();
        sq += c[row] * c[row];
      }
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t row = 0; row < D; ++row) c[row] *= inv;
  }
}

void DenseProjection::project(std::span<const double> x, std::span<double> out) const {
  require_size(x.size(), d_, "dense project input");
  require_size(out.size(), D_, "dense project output");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t col = 0; col < d_; ++col) {
    const double* c = matrix_.data() + col * D_;
    const double xc = x[col];
    for (std::size_t row = 0; row < D_; ++row) out[row] += c[row] * xc;
  }
}

void DenseProjection::adjoint(std::span<const double> y, std::span<double> out) const {
  require_size(y.size(), D_, "dense adjoint input");
  require_size(out.size(), d_, "dense adjoint output");
  for (std::size_t col = 0; col < d_; ++col) {
    const double* c = matrix_.data() + col * D_;
    double acc = 0.0;
    for (std::size_t row = 0; row < D_; ++row) acc += c[row] * y[row];
    out[col] = acc;
  }
}

std::vector<double> DenseProjection::project(std::span<const double> x) const {
  std::vector<double> out(D_);
  project(x, std::span<double>(out));
  return out;
}

std::vector<double> DenseProjection::adjoint(std::span<const double> y) const {
  std::vector<double> out(d_);
  adjoint(y, std::span<double>(out));
  return out;
}

DenseProjection make_dense(std::uint64_t seed, std::size_t d, std::size_t D) {
  return DenseProjection(seed, d, D);
}

std::string to_string(ProjectionKind kind) {
  return kind == ProjectionKind::kFastfood ? "fastfood" : "dense";
}

ProjectionKind projection_kind_from_string(const std::string& name) {
  if (name == "fastfood") return ProjectionKind::kFastfood;
  if (name == "dense") return ProjectionKind::kDense;
  throw ConfigError("unknown projection kind '" + name + "' (expected fastfood|dense)");
}

namespace {

std::variant<FastfoodProjection, DenseProjection> build(const ProjectionSpec& spec) {
  if (spec.kind == ProjectionKind::kFastfood) {
    return FastfoodProjection(spec.seed, spec.d, spec.D);
  }
  return DenseProjection(spec.seed, spec.d, spec.D);
}

}  // namespace

Projection::Projection(const ProjectionSpec& spec) : spec_(spec), impl_(build(spec)) {}

void Projection::project(std::span<const double> x, std::span<double> out) const {
  std::visit([&](const auto& p) { p.project(x, out); }, impl_);
}

void Projection::adjoint(std::span<const double> y, std::span<double> out) const {
  std::visit([&](const auto& p) { p.adjoint(y, out); }, impl_);
}

}  // namespace idim
