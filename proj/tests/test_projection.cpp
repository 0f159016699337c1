// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "idim/error.hpp"
#include "idim/projection.hpp"
#include "test_util.hpp"

using namespace idim;
using idim::test::random_vector;

namespace {

// Column-major D x d matrix assembled by projecting every basis vector.
std::vector<double> materialize(const FastfoodProjection& p) {
  const std::size_t d = p.intrinsic_dim(), D = p.full_dim();
  std::vector<double> m(d * D);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> e(d, 0.0);
    e[j] = 1.0;
    const auto col = p.project(e);
    std::copy(col.begin(), col.end(), m.begin() + j * D);
  }
  return m;
}

std::vector<double> dense_multiply(const std::vector<double>& m, std::size_t D,
                                   std::span<const double> x) {
  std::vector<double> y(D, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (std::size_t i = 0; i < D; ++i) y[i] += m[j * D + i] * x[j];
  }
  return y;
}

}  // namespace

TEST(Fastfood, BlockTiling) {
  const auto a = make_fastfood(7, 4, 16);
  EXPECT_EQ(a.block_size(), 4u);
  EXPECT_EQ(a.blocks().size(), 4u);
  const auto b = make_fastfood(7, 5, 16);
  EXPECT_EQ(b.block_size(), 8u);
  EXPECT_EQ(b.blocks().size(), 2u);
  const auto c = make_fastfood(7, 1, 3);
  EXPECT_EQ(c.block_size(), 1u);
  EXPECT_EQ(c.blocks().size(), 3u);
}

TEST(Fastfood, ReconstructionIsBitIdentical) {
  const auto a = make_fastfood(7, 4, 16);
  const auto b = make_fastfood(7, 4, 16);
  for (std::size_t k = 0; k < a.blocks().size(); ++k) {
    EXPECT_EQ(a.blocks()[k].g, b.blocks()[k].g);
    EXPECT_EQ(a.blocks()[k].b, b.blocks()[k].b);
    EXPECT_EQ(a.blocks()[k].perm, b.blocks()[k].perm);
    EXPECT_EQ(a.blocks()[k].g_norm, b.blocks()[k].g_norm);
  }
  const auto x = random_vector(4, 1);
  EXPECT_EQ(a.project(x), b.project(x));
  const auto other = make_fastfood(8, 4, 16);
  EXPECT_NE(a.project(x), other.project(x));
}

TEST(Fastfood, BlockInvariants) {
  const auto p = make_fastfood(99, 13, 200);
  for (const auto& blk : p.blocks()) {
    std::set<std::uint32_t> seen(blk.perm.begin(), blk.perm.end());
    EXPECT_EQ(seen.size(), p.block_size());
    EXPECT_EQ(*seen.rbegin(), p.block_size() - 1);
    for (double s : blk.b) EXPECT_TRUE(s == 1.0 || s == -1.0);
    EXPECT_NEAR(blk.g_norm, test::norm(blk.g), 1e-15);
    EXPECT_GT(blk.g_norm, 0.0);
  }
}

TEST(Fastfood, ZeroDimensionsRejected) {
  EXPECT_THROW(make_fastfood(1, 0, 4), InvalidDimensionError);
  EXPECT_THROW(make_fastfood(1, 4, 0), InvalidDimensionError);
}

TEST(Fastfood, LengthMismatchRejected) {
  const auto p = make_fastfood(1, 4, 10);
  EXPECT_THROW(p.project(std::vector<double>(5)), InvalidDimensionError);
  EXPECT_THROW(p.adjoint(std::vector<double>(9)), InvalidDimensionError);
}

TEST(Fastfood, ZeroMapsToZero) {
  const auto p = make_fastfood(3, 6, 50);
  const auto y = p.project(std::vector<double>(6, 0.0));
  EXPECT_EQ(y, std::vector<double>(50, 0.0));
  EXPECT_EQ(p.adjoint(std::vector<double>(50, 0.0)), std::vector<double>(6, 0.0));
}

TEST(Fastfood, UnitBlocksAreSignedScalars) {
  const auto p = make_fastfood(7, 1, 4);
  const double c = -1.75;
  const auto y = p.project(std::vector<double>{c});
  for (double v : y) EXPECT_NEAR(std::abs(v), std::abs(c), 1e-15);
  EXPECT_NEAR(test::norm(y), 2.0 * std::abs(c), 1e-14);
}

TEST(Fastfood, MatchesMaterializedMatrix) {
  const auto p = make_fastfood(7, 4, 16);
  const auto m = materialize(p);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_vector(4, 1000 + trial);
    EXPECT_LE(test::rel_error(p.project(x), dense_multiply(m, 16, x)), 1e-10);
  }
  // adjoint(e_i) is row i
  for (std::size_t i = 0; i < 16; ++i) {
    std::vector<double> e(16, 0.0);
    e[i] = 1.0;
    const auto row = p.adjoint(e);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(row[j], m[j * 16 + i], 1e-12);
  }
}

TEST(Fastfood, AdjointInnerProductIdentity) {
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{{4, 16}, {5, 33}, {16, 1000},
                                                                {3, 7}};
  for (auto [d, D] : shapes) {
    const auto p = make_fastfood(42, d, D);
    for (int t = 0; t < 100; ++t) {
      const auto x = random_vector(d, 10 * t + 1);
      const auto y = random_vector(D, 10 * t + 2);
      const double lhs = test::dot(p.project(x), y);
      const double rhs = test::dot(x, p.adjoint(y));
      EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(rhs)))
          << "d=" << d << " D=" << D;
    }
  }
}

TEST(Fastfood, ColumnNorms) {
  // D = 33 with n = 8: the last block is truncated to 1 row.
  const auto p = make_fastfood(11, 5, 33);
  const auto m = materialize(p);
  for (std::size_t j = 0; j < 5; ++j) {
    // full blocks alone carry unit norm per block
    for (std::size_t k = 0; k < 4; ++k) {
      double sq = 0.0;
      for (std::size_t i = k * 8; i < (k + 1) * 8; ++i) sq += m[j * 33 + i] * m[j * 33 + i];
      EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-10);
    }
    const double tail = std::abs(m[j * 33 + 32]);
    EXPECT_LE(tail, 1.0 + 1e-10);
  }
}

TEST(Fastfood, Linearity) {
  const auto p = make_fastfood(5, 12, 300);
  const auto x = random_vector(12, 1), y = random_vector(12, 2);
  const double a = 2.5, b = -0.5;
  std::vector<double> combo(12);
  for (std::size_t i = 0; i < 12; ++i) combo[i] = a * x[i] + b * y[i];
  const auto px = p.project(x), py = p.project(y);
  std::vector<double> expected(300);
  for (std::size_t i = 0; i < 300; ++i) expected[i] = a * px[i] + b * py[i];
  EXPECT_LE(test::rel_error(p.project(combo), expected), 1e-10);
}

TEST(Fastfood, ColumnEntriesCentered) {
  const auto p = make_fastfood(2024, 16, 4096);
  for (std::size_t j = 0; j < 16; ++j) {
    std::vector<double> e(16, 0.0);
    e[j] = 1.0;
    const auto col = p.project(e);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / 4096.0;
    // entries have magnitude ~1/sqrt(16) per block
    EXPECT_LE(std::abs(mean), 0.05);
  }
}

TEST(Fastfood, SinglePrecisionPath) {
  const auto p = make_fastfood(9, 6, 40);
  const auto x = random_vector(6, 4);
  std::vector<float> xf(x.begin(), x.end()), yf(40);
  p.project(std::span<const float>(xf), std::span<float>(yf));
  const auto yd = p.project(x);
  EXPECT_LE(test::rel_error(std::vector<double>(yf.begin(), yf.end()), yd), 1e-5);
  std::vector<float> back(6);
  p.adjoint(std::span<const float>(yf), std::span<float>(back));
  EXPECT_LE(test::rel_error(std::vector<double>(back.begin(), back.end()), p.adjoint(yd)),
            1e-5);
}

TEST(Dense, UnitColumnsAndTranspose) {
  const auto p = make_dense(3, 7, 50);
  for (std::size_t j = 0; j < 7; ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < 50; ++i) sq += p.at(i, j) * p.at(i, j);
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
  }
  EXPECT_EQ(p.project(std::vector<double>(7, 0.0)), std::vector<double>(50, 0.0));
  for (int t = 0; t < 20; ++t) {
    const auto x = random_vector(7, 2 * t), y = random_vector(50, 2 * t + 1);
    const double lhs = test::dot(p.project(x), y);
    const double rhs = test::dot(x, p.adjoint(y));
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Dense, CapacityCap) {
  try {
    DenseProjection(1, 1000, 1000, 1000);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("1.42 TB"), std::string::npos);
  }
  EXPECT_THROW(make_dense(1, 5000, 5000), CapacityError);
}

TEST(ProjectionHandle, DispatchesByKind) {
  ProjectionSpec ff{ProjectionKind::kFastfood, 7, 4, 16};
  ProjectionSpec dn{ProjectionKind::kDense, 7, 4, 16};
  const Projection a(ff), b(dn);
  const auto x = random_vector(4, 8);
  std::vector<double> ya(16), yb(16);
  a.project(x, ya);
  b.project(x, yb);
  EXPECT_EQ(ya, make_fastfood(7, 4, 16).project(x));
  EXPECT_EQ(yb, make_dense(7, 4, 16).project(x));
  EXPECT_EQ(projection_kind_from_string(to_string(ProjectionKind::kDense)), ProjectionKind::kDense);
  EXPECT_THROW(projection_kind_from_string("sparse"), ConfigError);
}
