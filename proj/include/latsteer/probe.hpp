// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace latsteer {

struct ProbeTrainingOptions {
  double learning_rate = 0.1;
  int max_iterations = 5000;
  double gradient_tolerance = 1e-8;
  double l2 = 1e-4;
};

struct ProbeTrainingInfo {
  int iterations = 0;
  bool converged = false;
  double final_loss = 0.0;
  double gradient_norm = 0.0;
  // Training runs on (z - feature_mean) / feature_scale.
  double feature_mean = 0.0;
  double feature_scale = 1.0;
  ProbeTrainingOptions options;
};

// Multinomial logistic regression over one scalar feature:
// P(lang | z) = softmax_l(w_l z + b_l).
struct ProjectionProbe {
  std::vector<std::string> languages;
  std::vector<double> weights;
  std::vector<double> biases;
  int layer_index = -1;
  std::size_t component_index = 0;
  ProbeTrainingInfo training;

  // Argmax of the logits; ties resolve to the earliest language.
  std::size_t predict_index(double z) const;
  const std::string& predict(double z) const { return languages[predict_index(z)]; }
  std::vector<double> posterior(double z) const;
  void validate() const;
};

// Per-iteration loss in the standardised parameterisation, for diagnostics.
struct ProbeTrace {
  std::vector<double> loss;
};

// Full-batch gradient descent from zero parameters on the mean cross-entropy
// plus (l2 / 2) * sum(w^2). Languages are ordered by first appearance unless given.
ProjectionProbe train_probe(std::span<const double> z, std::span<const std::string> labels,
                            const ProbeTrainingOptions& options = {}, ProbeTrace* trace = nullptr);
ProjectionProbe train_probe(std::span<const double> z, std::span<const std::string> labels,
                            std::span<const std::string> languages, const ProbeTrainingOptions& options = {},
                            ProbeTrace* trace = nullptr);

struct ProbeEvaluation {
  std::vector<std::string> languages;
  double accuracy = 0.0;
  std::size_t total = 0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

ProbeEvaluation evaluate_probe(const ProjectionProbe& probe, std::span<const double> z,
                               std::span<const std::string> labels);

nlohmann::json to_json(const ProjectionProbe& probe);
ProjectionProbe probe_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeEvaluation& eval);

}  // namespace latsteer
