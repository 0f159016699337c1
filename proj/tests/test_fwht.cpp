// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <vector>

#include "idim/error.hpp"
#include "idim/fwht.hpp"
#include "test_util.hpp"

using namespace idim;
using idim::test::random_vector;

TEST(Fwht, FirstColumnIsAllOnes) {
  std::vector<double> v{1, 0, 0, 0};
  fwht_inplace(std::span<double>(v));
  EXPECT_EQ(v, (std::vector<double>{1, 1, 1, 1}));
}

TEST(Fwht, AppliedTwiceScalesByOrder) {
  const auto orig = random_vector(4, 3);
  auto v = orig;
  fwht_inplace(std::span<double>(v));
  fwht_inplace(std::span<double>(v));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(v[i], 4.0 * orig[i], 1e-14);
}

TEST(Fwht, OrderOneIsIdentity) {
  std::vector<double> v{-2.5};
  fwht_inplace(std::span<double>(v));
  EXPECT_EQ(v[0], -2.5);
}

TEST(Fwht, MatchesNaiveOnEightSeededValues) {
  const auto x = random_vector(8, 17, 0.0, 1.0);
  auto v = x;
  fwht_inplace(std::span<double>(v));
  const auto expected = naive_hadamard_multiply(x);
  EXPECT_LE(test::max_abs_diff(v, expected), 1e-12);
}

TEST(Fwht, RejectsNonPowerOfTwo) {
  std::vector<double> v(6, 1.0);
  EXPECT_THROW(fwht_inplace(std::span<double>(v)), InvalidDimensionError);
  std::vector<double> empty;
  EXPECT_THROW(fwht_inplace(std::span<double>(empty)), InvalidDimensionError);
  std::vector<float> vf(12, 1.0f);
  EXPECT_THROW(fwht_inplace(std::span<float>(vf)), InvalidDimensionError);
  EXPECT_THROW(naive_hadamard_multiply(v), InvalidDimensionError);
}

TEST(NaiveHadamard, SmallCases) {
  EXPECT_EQ(naive_hadamard_multiply(std::vector<double>{1, 0}), (std::vector<double>{1, 1}));
  EXPECT_EQ(naive_hadamard_multiply(std::vector<double>{0, 1}), (std::vector<double>{1, -1}));
  EXPECT_EQ(naive_hadamard_multiply(std::vector<double>{1, 1, 1, 1}),
            (std::vector<double>{4, 0, 0, 0}));
}

TEST(FwhtProperties, OracleInvolutionParsevalLinearity) {
  for (std::size_t n = 1; n <= 4096; n *= 2) {
    const auto x = random_vector(n, 100 + n);
    const auto y = random_vector(n, 200 + n);

    auto hx = x;
    fwht_inplace(std::span<double>(hx));
    if (n <= 1024) {
      EXPECT_LE(test::max_abs_diff(hx, naive_hadamard_multiply(x)), 1e-10) << "n=" << n;
    }

    const double nx2 = test::dot(x, x);
    EXPECT_LE(test::rel_error(test::dot(hx, hx), static_cast<double>(n) * nx2), 1e-12);

    auto hhx = hx;
    fwht_inplace(std::span<double>(hhx));
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = static_cast<double>(n) * x[i];
    EXPECT_LE(test::rel_error(hhx, scaled), 1e-12) << "n=" << n;

    const double a = 0.75, b = -1.5;
    std::vector<double> combo(n);
    for (std::size_t i = 0; i < n; ++i) combo[i] = a * x[i] + b * y[i];
    fwht_inplace(std::span<double>(combo));
    auto hy = y;
    fwht_inplace(std::span<double>(hy));
    std::vector<double> expected(n);
    for (std::size_t i = 0; i < n; ++i) expected[i] = a * hx[i] + b * hy[i];
    EXPECT_LE(test::rel_error(combo, expected), 1e-12) << "n=" << n;
  }
}

TEST(FwhtProperties, SinglePrecisionTracksDouble) {
  const auto x = random_vector(256, 5);
  std::vector<float> xf(x.begin(), x.end());
  auto xd = x;
  fwht_inplace(std::span<double>(xd));
  fwht_inplace(std::span<float>(xf));
  std::vector<double> back(xf.begin(), xf.end());
  EXPECT_LE(test::rel_error(back, xd), 1e-5);
}
