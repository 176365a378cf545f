// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <span>

#include "oracle/jacobi_eigen.hpp"

TEST_CASE("jacobi: diagonal 2x2") {
  const auto e = oracle::jacobi_eigen({1.0, 0.0, 0.0, 3.0}, 2);
  CHECK(e.values[0] == doctest::Approx(3.0));
  CHECK(e.values[1] == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors[0][1]) == doctest::Approx(1.0));
}

TEST_CASE("jacobi: [[2,1],[1,2]] has eigenvalues 3 and 1") {
  const auto e = oracle::jacobi_eigen({2.0, 1.0, 1.0, 2.0}, 2);
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(oracle::abs_cosine({r, r}, std::span<const double>(e.vectors[0])) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(oracle::abs_cosine({r, -r}, std::span<const double>(e.vectors[1])) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("jacobi: [[4,2],[2,1]] is rank one") {
  // eigenvalues 5 and 0, top eigenvector (2,1)/sqrt(5)
  const auto e = oracle::jacobi_eigen({4.0, 2.0, 2.0, 1.0}, 2);
  CHECK(e.values[0] == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(std::abs(e.values[1]) < 1e-14);
  CHECK(oracle::abs_cosine({2.0, 1.0}, std::span<const double>(e.vectors[0])) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("covariance of axis-aligned points") {
  // (-1,0),(1,0),(-2,0),(2,0): var x = 2.5, var y = 0
  const auto cov = oracle::covariance({-1, 0, 1, 0, -2, 0, 2, 0}, 4, 2);
  CHECK(cov[0] == doctest::Approx(2.5));
  CHECK(cov[1] == 0.0);
  CHECK(cov[3] == 0.0);
}
