// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/activation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/core.h>

#include "latsteer/error.hpp"

namespace latsteer {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void ActivationMatrix::validate() const {
  if (labels.size() != rows.rows) {
    throw InputError(fmt::format("layer {}: {} labels for {} rows", layer_index, labels.size(), rows.rows));
  }
  if (rows.data.size() != rows.rows * rows.cols) {
    throw InputError(fmt::format("layer {}: matrix storage does not match its shape", layer_index));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& lang : languages) counts[lang] = 0;
  if (counts.size() != languages.size()) throw InputError("duplicate language code in language list");
  for (const auto& label : labels) {
    auto it = counts.find(label);
    if (it == counts.end()) throw InputError(fmt::format("layer {}: unknown language label '{}'", layer_index, label));
    ++it->second;
  }
  for (const auto& [lang, count] : counts) {
    if (count < 2) throw InputError(fmt::format("layer {}: language '{}' has {} rows, need >= 2", layer_index, lang, count));
  }
  if (!std::all_of(rows.data.begin(), rows.data.end(), [](double x) { return std::isfinite(x); })) {
    throw InputError(fmt::format("layer {}: non-finite activation value", layer_index));
  }
}

ActivationMatrix ActivationMatrix::select(std::span<const std::size_t> row_indices) const {
  ActivationMatrix out;
  out.layer_index = layer_index;
  out.rows = Matrix(row_indices.size(), rows.cols);
  out.labels.reserve(row_indices.size());
  for (std::size_t i = 0; i < row_indices.size(); ++i) {
    const auto src = rows.row(row_indices[i]);
    std::copy(src.begin(), src.end(), out.rows.row(i).begin());
    out.labels.push_back(labels[row_indices[i]]);
  }
  for (const auto& lang : languages) {
    if (std::find(out.labels.begin(), out.labels.end(), lang) != out.labels.end()) out.languages.push_back(lang);
  }
  return out;
}

std::vector<std::string> ordered_languages(std::span<const std::string> labels) {
  std::vector<std::string> out;
  for (const auto& label : labels) {
    if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
  }
  return out;
}

}  // namespace latsteer
