// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/steerer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "latsteer/error.hpp"

namespace latsteer {
namespace {

void check_unit(std::span<const double> v) {
  const double n = norm(v);
  if (!(std::abs(n - 1.0) <= 1e-6)) throw InputError(fmt::format("steering direction is not unit length (norm {})", n));
}

double snap(double x) {
  const double snapped = std::round(x * 1e12) / 1e12;
  return snapped == 0.0 ? 0.0 : snapped;  // no negative zero
}

bool better(const GridPoint& candidate, const GridPoint& incumbent) {
  if (candidate.score != incumbent.score) return candidate.score < incumbent.score;
  const double ca = std::abs(candidate.strength), ia = std::abs(incumbent.strength);
  if (ca != ia) return ca < ia;
  return candidate.strength < incumbent.strength;
}

}  // namespace

void SteeringConfig::validate(int num_layers, std::size_t k) const {
  if (layer_threshold < 0 || layer_threshold > num_layers) {
    throw InputError(fmt::format("layer_threshold {} outside [0, {}]", layer_threshold, num_layers));
  }
  if (component_index >= k) throw InputError(fmt::format("component_index {} >= k = {}", component_index, k));
  if (!std::isfinite(strength)) throw InputError("steering strength must be finite");
}

int default_layer_threshold(int num_layers) {
  if (num_layers < 1) throw InputError("default_layer_threshold: need at least one layer");
  return num_layers - std::max(1, num_layers / 4);
}

void steer_in_place(std::span<double> h, std::span<const double> v, double strength) {
  if (h.size() != v.size()) throw InputError(fmt::format("steer: dim {} vs direction dim {}", h.size(), v.size()));
  if (!std::isfinite(strength)) throw InputError("steering strength must be finite");
  check_unit(v);
  const double c = strength * dot(h, v);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] -= c * v[i];
}

std::vector<double> steer_vector(std::span<const double> h, std::span<const double> v, double strength) {
  std::vector<double> out(h.begin(), h.end());
  steer_in_place(out, v, strength);
  return out;
}

std::vector<ActivationMatrix> steer_batch(std::span<const ActivationMatrix> layers, const DirectionSet& dirs,
                                          const SteeringConfig& cfg) {
  cfg.validate(static_cast<int>(layers.size()), dirs.k());
  std::vector<ActivationMatrix> out(layers.begin(), layers.end());
  for (auto& layer : out) {
    if (layer.layer_index < cfg.layer_threshold) continue;
    if (!dirs.has_layer(layer.layer_index)) {
      throw InputError(fmt::format("steer_batch: missing direction for layer {}", layer.layer_index));
    }
    const auto& entry = dirs.at(layer.layer_index);
    if (cfg.component_index >= entry.k()) {
      throw InputError(fmt::format("steer_batch: component {} not in layer {}", cfg.component_index, layer.layer_index));
    }
    const auto v = entry.component(cfg.component_index);
    for (std::size_t i = 0; i < layer.rows.rows; ++i) steer_in_place(layer.rows.row(i), v, cfg.strength);
  }
  return out;
}

std::vector<double> StrengthGrid::points() const {
  validate();
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> pts;
  pts.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) pts.push_back(snap(lo + static_cast<double>(i) * step));
  return pts;
}

void StrengthGrid::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(step)) throw InputError("grid bounds must be finite");
  if (!(lo < hi)) throw InputError(fmt::format("grid: lo ({}) must be < hi ({})", lo, hi));
  if (!(step > 0.0)) throw InputError("grid: step must be > 0");
  if ((hi - lo) / step > 1e7) throw InputError("grid: too many points");
}

StrengthGrid StrengthGrid::parse(const std::string& text) {
  const auto first = text.find(':');
  const auto second = first == std::string::npos ? std::string::npos : text.find(':', first + 1);
  if (second == std::string::npos) throw InputError("grid must be lo:hi:step, got '" + text + "'");
  StrengthGrid g;
  try {
    std::size_t used = 0;
    const auto parse_part = [&](const std::string& part) {
      const double v = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      return v;
    };
    g.lo = parse_part(text.substr(0, first));
    g.hi = parse_part(text.substr(first + 1, second - first - 1));
    g.step = parse_part(text.substr(second + 1));
  } catch (const std::logic_error&) {
    throw InputError("grid must be lo:hi:step, got '" + text + "'");
  }
  g.validate();
  return g;
}

GridSearchResult grid_search_strength(const StrengthObjective& objective, const StrengthGrid& grid,
                                      GridEvaluation mode, unsigned threads) {
  const auto pts = grid.points();
  std::vector<GridPoint> curve(pts.size());
  auto evaluate = [&](std::size_t i) {
    double score = 0.0;
    try {
      score = objective(pts[i]);
    } catch (const std::exception& e) {
      throw ComputeError(fmt::format("objective failed at strength {}: {}", pts[i], e.what()));
    }
    if (!std::isfinite(score)) throw ComputeError(fmt::format("objective returned non-finite value at strength {}", pts[i]));
    curve[i] = {pts[i], score};
  };

  if (mode == GridEvaluation::sequential) {
    for (std::size_t i = 0; i < pts.size(); ++i) evaluate(i);
  } else {
    const unsigned workers = std::max(1u, threads != 0 ? threads : std::thread::hardware_concurrency());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::size_t failed_index = pts.size();
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < pts.size(); i = next++) {
          try {
            evaluate(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            // Report the lowest failing grid index so errors are deterministic.
            if (i < failed_index) {
              failed_index = i;
              failure = std::current_exception();
            }
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  GridSearchResult result;
  result.curve = std::move(curve);
  GridPoint best = result.curve.front();
  for (const auto& p : result.curve) {
    if (better(p, best)) best = p;
  }
  result.best_strength = best.strength;
  result.best_score = best.score;
  return result;
}

std::string curve_csv(const GridSearchResult& result) {
  std::string out = "strength,mean_kl\n";
  for (const auto& p : result.curve) out += fmt::format("{:.6g},{:.17g}\n", p.strength, p.score);
  return out;
}

}  // namespace latsteer
