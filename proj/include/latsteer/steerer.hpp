// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latsteer/activation.hpp"
#include "latsteer/direction_finder.hpp"

namespace latsteer {

// Strength is signed: positive values remove the language component, negative
// values amplify it along the direction's orientation.
struct SteeringConfig {
  double strength = 1.0;
  int layer_threshold = 0;
  std::size_t component_index = 0;

  void validate(int num_layers, std::size_t k) const;
};

// Last quarter of the layers (at least one) is steered.
int default_layer_threshold(int num_layers);

// h - s (h . v) v. `v` must be unit length within 1e-6.
std::vector<double> steer_vector(std::span<const double> h, std::span<const double> v, double strength);
void steer_in_place(std::span<double> h, std::span<const double> v, double strength);

// Layers below the threshold pass through unchanged.
std::vector<ActivationMatrix> steer_batch(std::span<const ActivationMatrix> layers, const DirectionSet& dirs,
                                          const SteeringConfig& cfg);

struct StrengthGrid {
  double lo = -4.0;
  double hi = 4.0;
  double step = 0.1;

  // lo, lo + step, ... up to hi, each snapped to 1e-12 so on-grid decimals are exact.
  std::vector<double> points() const;
  void validate() const;
  // "lo:hi:step"
  static StrengthGrid parse(const std::string& text);
};

struct GridPoint {
  double strength = 0.0;
  double score = 0.0;
};

struct GridSearchResult {
  double best_strength = 0.0;
  double best_score = 0.0;
  std::vector<GridPoint> curve;
};

using StrengthObjective = std::function<double(double strength)>;

enum class GridEvaluation {
  sequential,
  // Only for objectives the caller guarantees to be pure and thread-safe.
  parallel_pure,
};

// Minimises the objective over the grid. Ties go to the smallest |s|, then to
// the smaller s. An objective failure aborts with the offending strength.
GridSearchResult grid_search_strength(const StrengthObjective& objective, const StrengthGrid& grid,
                                      GridEvaluation mode = GridEvaluation::sequential, unsigned threads = 0);

// strength,mean_kl
std::string curve_csv(const GridSearchResult& result);

}  // namespace latsteer
