// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace latsteer {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Hidden states of one layer: one row per (sample, language), with the
// language of every row and the ordered language set the rows were drawn from.
struct ActivationMatrix {
  int layer_index = 0;
  Matrix rows;
  std::vector<std::string> labels;
  std::vector<std::string> languages;

  std::size_t size() const { return rows.rows; }
  std::size_t dim() const { return rows.cols; }

  // Throws InputError unless labels match rows, every label is a known
  // language, every language has at least two rows and all values are finite.
  void validate() const;

  // Row subset in the given order; languages are narrowed to those present.
  ActivationMatrix select(std::span<const std::size_t> row_indices) const;
};

// Languages in order of first appearance.
std::vector<std::string> ordered_languages(std::span<const std::string> labels);

}  // namespace latsteer
