// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latsteer/activation.hpp"

namespace latsteer {

// Principal directions of one layer. Row j of `components` is the j-th unit
// direction by descending variance; row 0 is the language direction.
struct DirectionLayer {
  int layer_index = 0;
  std::vector<double> mean;
  Matrix components;
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;
  double total_variance = 0.0;
  std::vector<int> iterations;

  std::size_t k() const { return components.rows; }
  std::size_t dim() const { return components.cols; }
  std::span<const double> component(std::size_t j) const { return components.row(j); }
};

struct DirectionSet {
  std::vector<std::string> languages;
  std::string manifest_sha256;
  std::map<int, DirectionLayer> layers;

  std::size_t k() const;
  bool has_layer(int layer) const { return layers.count(layer) != 0; }
  const DirectionLayer& at(int layer) const;
};

struct PowerIterationOptions {
  // Stop when successive unit iterates differ by less than this in L2 norm.
  double tolerance = 1e-10;
  int max_iterations = 10000;
  // Directions whose variance falls below this fraction of the total are
  // treated as absent.
  double zero_variance = 1e-12;
};

inline constexpr const char* kSignConvention =
    "mean centered projection of the first language onto every component is >= 0; "
    "exact ties make the first nonzero coordinate positive";

// PCA by power iteration with Hotelling deflation on centered rows. The
// covariance is never formed: each step applies X^T (X v) / N.
DirectionLayer fit_directions(const ActivationMatrix& acts, std::size_t k, const PowerIterationOptions& options = {});

// Row i, column j = (h_i - mean) . v_j.
Matrix project(const ActivationMatrix& acts, const DirectionLayer& dirs, std::size_t n_components);

struct VarianceProfile {
  std::vector<int> layer_indices;
  Matrix ratios;  // one row per layer, k columns
};

// Fits every layer (concurrently when `threads` > 1); rows keep input order.
VarianceProfile layer_variance_profile(std::span<const ActivationMatrix> layers, std::size_t k,
                                       unsigned threads = 1, const PowerIterationOptions& options = {});

// Minimum distance between per-language means of `values` divided by the
// pooled within-language standard deviation.
double cluster_separation(std::span<const double> values, std::span<const std::string> labels);

// directions.json plus directions_layer_{i}.lstens holding [mean; components].
// `extra` is merged into the JSON metadata.
void save_directions(const std::filesystem::path& dir, const DirectionSet& set,
                     const nlohmann::json& extra = nlohmann::json::object());
DirectionSet load_directions(const std::filesystem::path& dir);

}  // namespace latsteer
