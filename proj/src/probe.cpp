// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/probe.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "latsteer/activation.hpp"
#include "latsteer/error.hpp"

namespace latsteer {
namespace {

// Mean cross-entropy + ridge term and its gradient at (w, b) for features x.
double loss_and_gradient(std::span<const double> x, std::span<const std::size_t> y, std::span<const double> w,
                         std::span<const double> b, double l2, std::span<double> gw, std::span<double> gb) {
  const std::size_t classes = w.size();
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
  std::vector<double> logits(classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double peak = -INFINITY;
    for (std::size_t l = 0; l < classes; ++l) {
      logits[l] = w[l] * x[i] + b[l];
      peak = std::max(peak, logits[l]);
    }
    double total = 0.0;
    for (std::size_t l = 0; l < classes; ++l) total += std::exp(logits[l] - peak);
    const double lse = peak + std::log(total);
    loss += lse - logits[y[i]];
    for (std::size_t l = 0; l < classes; ++l) {
      const double residual = std::exp(logits[l] - lse) - (l == y[i] ? 1.0 : 0.0);
      gw[l] += residual * x[i];
      gb[l] += residual;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(x.size());
  loss *= inv_n;
  double ridge = 0.0;
  for (std::size_t l = 0; l < classes; ++l) {
    gw[l] = gw[l] * inv_n + l2 * w[l];
    gb[l] *= inv_n;
    ridge += w[l] * w[l];
  }
  return loss + 0.5 * l2 * ridge;
}

std::vector<std::size_t> encode_labels(std::span<const std::string> labels, std::span<const std::string> languages) {
  std::vector<std::size_t> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(languages.begin(), languages.end(), labels[i]);
    if (it == languages.end()) throw InputError(fmt::format("unknown label '{}'", labels[i]));
    y[i] = static_cast<std::size_t>(it - languages.begin());
  }
  return y;
}

}  // namespace

std::size_t ProjectionProbe::predict_index(double z) const {
  std::size_t best = 0;
  double best_logit = weights[0] * z + biases[0];
  for (std::size_t l = 1; l < languages.size(); ++l) {
    const double logit = weights[l] * z + biases[l];
    if (logit > best_logit) {
      best = l;
      best_logit = logit;
    }
  }
  return best;
}

std::vector<double> ProjectionProbe::posterior(double z) const {
  std::vector<double> p(languages.size());
  double peak = -INFINITY;
  for (std::size_t l = 0; l < p.size(); ++l) {
    p[l] = weights[l] * z + biases[l];
    peak = std::max(peak, p[l]);
  }
  double total = 0.0;
  for (auto& v : p) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

void ProjectionProbe::validate() const {
  if (languages.size() < 2) throw InputError("probe: need at least two languages");
  if (weights.size() != languages.size() || biases.size() != languages.size()) {
    throw InputError("probe: one (weight, bias) pair per language required");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) || !std::all_of(biases.begin(), biases.end(), finite)) {
    throw InputError("probe: non-finite parameter");
  }
}

ProjectionProbe train_probe(std::span<const double> z, std::span<const std::string> labels,
                            const ProbeTrainingOptions& options, ProbeTrace* trace) {
  const auto languages = ordered_languages(labels);
  return train_probe(z, labels, languages, options, trace);
}

ProjectionProbe train_probe(std::span<const double> z, std::span<const std::string> labels,
                            std::span<const std::string> languages, const ProbeTrainingOptions& options,
                            ProbeTrace* trace) {
  if (z.size() != labels.size()) throw InputError(fmt::format("train_probe: {} values for {} labels", z.size(), labels.size()));
  if (z.empty()) throw InputError("train_probe: no samples");
  if (!std::all_of(z.begin(), z.end(), [](double v) { return std::isfinite(v); })) {
    throw InputError("train_probe: non-finite projection value");
  }
  if (ordered_languages(labels).size() < 2) throw InputError("train_probe: single class");
  const auto y = encode_labels(labels, languages);

  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  double scale = std::sqrt(var / static_cast<double>(z.size()));
  if (!(scale > 0.0)) scale = 1.0;
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = (z[i] - mean) / scale;

  const std::size_t classes = languages.size();
  std::vector<double> w(classes, 0.0), b(classes, 0.0), gw(classes), gb(classes);
  ProbeTrainingInfo info;
  info.options = options;
  info.feature_mean = mean;
  info.feature_scale = scale;

  double loss = 0.0;
  double gnorm = 0.0;
  int iter = 0;
  for (;; ++iter) {
    loss = loss_and_gradient(x, y, w, b, options.l2, gw, gb);
    if (trace) trace->loss.push_back(loss);
    gnorm = 0.0;
    for (std::size_t l = 0; l < classes; ++l) gnorm = std::max({gnorm, std::abs(gw[l]), std::abs(gb[l])});
    if (gnorm < options.gradient_tolerance) {
      info.converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;
    for (std::size_t l = 0; l < classes; ++l) {
      w[l] -= options.learning_rate * gw[l];
      b[l] -= options.learning_rate * gb[l];
    }
  }
  info.iterations = iter;
  info.final_loss = loss;
  info.gradient_norm = gnorm;

  ProjectionProbe probe;
  probe.languages.assign(languages.begin(), languages.end());
  probe.weights.resize(classes);
  probe.biases.resize(classes);
  for (std::size_t l = 0; l < classes; ++l) {
    probe.weights[l] = w[l] / scale;
    probe.biases[l] = b[l] - w[l] * mean / scale;
  }
  probe.training = info;
  probe.validate();
  return probe;
}

ProbeEvaluation evaluate_probe(const ProjectionProbe& probe, std::span<const double> z,
                               std::span<const std::string> labels) {
  probe.validate();
  if (z.size() != labels.size()) throw InputError("evaluate_probe: values/labels length mismatch");
  if (z.empty()) throw InputError("evaluate_probe: no samples");
  const auto y = encode_labels(labels, probe.languages);
  ProbeEvaluation eval;
  eval.languages = probe.languages;
  eval.total = z.size();
  eval.confusion.assign(probe.languages.size(), std::vector<std::size_t>(probe.languages.size(), 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto predicted = probe.predict_index(z[i]);
    ++eval.confusion[y[i]][predicted];
    if (predicted == y[i]) ++correct;
  }
  eval.accuracy = static_cast<double>(correct) / static_cast<double>(z.size());
  return eval;
}

nlohmann::json to_json(const ProjectionProbe& probe) {
  const auto& t = probe.training;
  return {{"languages", probe.languages},
          {"weights", probe.weights},
          {"biases", probe.biases},
          {"layer_index", probe.layer_index},
          {"component_index", probe.component_index},
          {"training",
           {{"solver", "full-batch gradient descent"},
            {"learning_rate", t.options.learning_rate},
            {"max_iterations", t.options.max_iterations},
            {"gradient_tolerance", t.options.gradient_tolerance},
            {"l2", t.options.l2},
            {"iterations", t.iterations},
            {"converged", t.converged},
            {"final_loss", t.final_loss},
            {"gradient_norm", t.gradient_norm},
            {"feature_mean", t.feature_mean},
            {"feature_scale", t.feature_scale}}}};
}

ProjectionProbe probe_from_json(const nlohmann::json& j) {
  ProjectionProbe probe;
  try {
    probe.languages = j.at("languages").get<std::vector<std::string>>();
    probe.weights = j.at("weights").get<std::vector<double>>();
    probe.biases = j.at("biases").get<std::vector<double>>();
    probe.layer_index = j.value("layer_index", -1);
    probe.component_index = j.value("component_index", std::size_t{0});
    if (j.contains("training")) {
      const auto& t = j.at("training");
      probe.training.options.learning_rate = t.value("learning_rate", 0.1);
      probe.training.options.max_iterations = t.value("max_iterations", 5000);
      probe.training.options.gradient_tolerance = t.value("gradient_tolerance", 1e-8);
      probe.training.options.l2 = t.value("l2", 1e-4);
      probe.training.iterations = t.value("iterations", 0);
      probe.training.converged = t.value("converged", false);
      probe.training.final_loss = t.value("final_loss", 0.0);
      probe.training.gradient_norm = t.value("gradient_norm", 0.0);
      probe.training.feature_mean = t.value("feature_mean", 0.0);
      probe.training.feature_scale = t.value("feature_scale", 1.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("probe json: ") + e.what());
  }
  probe.validate();
  return probe;
}

nlohmann::json to_json(const ProbeEvaluation& eval) {
  return {{"languages", eval.languages}, {"accuracy", eval.accuracy}, {"total", eval.total}, {"confusion", eval.confusion}};
}

}  // namespace latsteer
