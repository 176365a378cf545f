// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/direction_finder.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "latsteer/error.hpp"
#include "latsteer/log.hpp"
#include "latsteer/tensor_store.hpp"

namespace fs = std::filesystem;

namespace latsteer {
namespace {

// out = X^T (X v) / N for row-major centered X.
void apply_covariance(const Matrix& x, std::span<const double> v, std::vector<double>& scratch,
                      std::span<double> out) {
  scratch.resize(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) scratch[i] = dot(x.row(i), v);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    const double a = scratch[i];
    for (std::size_t c = 0; c < x.cols; ++c) out[c] += a * r[c];
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (auto& o : out) o *= inv_n;
}

void orthogonalize(std::span<double> v, const Matrix& basis, std::size_t count) {
  // Two passes keep the result orthogonal to working precision.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t m = 0; m < count; ++m) {
      const auto b = basis.row(m);
      const double c = dot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
    }
  }
}

void normalize(std::span<double> v) {
  const double n = norm(v);
  for (auto& x : v) x /= n;
}

// Deflated operator: C v - sum_m lambda_m (v_m . v) v_m.
void apply_deflated(const Matrix& x, const Matrix& found, std::span<const double> lambdas, std::size_t count,
                    std::span<const double> v, std::vector<double>& scratch, std::span<double> out) {
  apply_covariance(x, v, scratch, out);
  for (std::size_t m = 0; m < count; ++m) {
    const auto b = found.row(m);
    const double c = lambdas[m] * dot(b, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * b[i];
  }
}

}  // namespace

std::size_t DirectionSet::k() const { return layers.empty() ? 0 : layers.begin()->second.k(); }

const DirectionLayer& DirectionSet::at(int layer) const {
  auto it = layers.find(layer);
  if (it == layers.end()) throw InputError(fmt::format("no direction for layer {}", layer));
  return it->second;
}

DirectionLayer fit_directions(const ActivationMatrix& acts, std::size_t k, const PowerIterationOptions& options) {
  acts.validate();
  const std::size_t n = acts.size();
  const std::size_t d = acts.dim();
  if (k < 1) throw InputError("fit_directions: k must be >= 1");
  if (n < 2) throw InputError("fit_directions: need at least two rows");
  if (k > std::min(n - 1, d)) {
    throw InputError(fmt::format("fit_directions: k = {} exceeds min(N - 1, d) = {}", k, std::min(n - 1, d)));
  }

  DirectionLayer out;
  out.layer_index = acts.layer_index;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = acts.rows.row(i);
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += r[c];
  }
  for (auto& m : out.mean) m /= static_cast<double>(n);

  Matrix centered = acts.rows;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = centered.row(i);
    for (std::size_t c = 0; c < d; ++c) r[c] -= out.mean[c];
  }
  double trace = 0.0;
  for (double x : centered.data) trace += x * x;
  trace /= static_cast<double>(n);
  out.total_variance = trace;
  const double zero_floor = options.zero_variance * trace;

  Matrix found(k, d);
  std::vector<double> lambdas;
  std::vector<double> v(d), w(d), scratch;
  for (std::size_t j = 0; j < k; ++j) {
    // Start from the first canonical basis vector with a usable Rayleigh quotient.
    bool started = false;
    for (std::size_t b = 0; b < d && !started; ++b) {
      std::fill(v.begin(), v.end(), 0.0);
      v[b] = 1.0;
      orthogonalize(v, found, j);
      if (norm(v) < 1e-12) continue;
      normalize(v);
      apply_deflated(centered, found, lambdas, j, v, scratch, w);
      started = trace > 0.0 && dot(v, w) >= zero_floor;
    }
    if (!started) {
      throw ComputeError(fmt::format("fit_directions: layer {} has only {} direction(s) with nonzero variance; "
                                     "achievable k = {}",
                                     acts.layer_index, j, j));
    }

    int iter = 0;
    bool converged = false;
    while (iter < options.max_iterations) {
      ++iter;
      apply_deflated(centered, found, lambdas, j, v, scratch, w);
      orthogonalize(w, found, j);
      const double wn = norm(w);
      if (!(wn > 0.0)) break;
      double delta2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double next = w[c] / wn;
        delta2 += (next - v[c]) * (next - v[c]);
        v[c] = next;
      }
      if (std::sqrt(delta2) < options.tolerance) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      log::warn("fit_directions: layer {} component {} stopped after {} iterations without converging",
                acts.layer_index, j, iter);
    }

    apply_covariance(centered, v, scratch, w);
    const double lambda = dot(v, w);
    if (!(lambda > zero_floor)) {
      throw ComputeError(fmt::format("fit_directions: layer {} has only {} direction(s) with nonzero variance; "
                                     "achievable k = {}",
                                     acts.layer_index, j, j));
    }
    std::copy(v.begin(), v.end(), found.row(j).begin());
    lambdas.push_back(lambda);
    out.iterations.push_back(iter);
  }

  // Descending variance order; deflation normally already yields it.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });

  out.components = Matrix(k, d);
  const std::string& anchor = acts.languages.front();
  for (std::size_t j = 0; j < k; ++j) {
    auto dst = out.components.row(j);
    const auto src = found.row(order[j]);
    std::copy(src.begin(), src.end(), dst.begin());
    out.explained_variance.push_back(lambdas[order[j]]);
    out.explained_variance_ratio.push_back(lambdas[order[j]] / trace);

    double anchor_sum = 0.0;
    std::size_t anchor_rows = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (acts.labels[i] != anchor) continue;
      anchor_sum += dot(centered.row(i), dst);
      ++anchor_rows;
    }
    const double anchor_mean = anchor_sum / static_cast<double>(anchor_rows);
    const double tie_scale = 1e-12 * std::sqrt(trace);
    bool flip = anchor_mean < -tie_scale;
    if (std::abs(anchor_mean) <= tie_scale) {
      auto first = std::find_if(dst.begin(), dst.end(), [](double x) { return std::abs(x) > 1e-12; });
      flip = first != dst.end() && *first < 0.0;
    }
    if (flip) {
      for (auto& x : dst) x = -x;
    }
  }
  std::vector<int> iters(k);
  for (std::size_t j = 0; j < k; ++j) iters[j] = out.iterations[order[j]];
  out.iterations = std::move(iters);
  return out;
}

Matrix project(const ActivationMatrix& acts, const DirectionLayer& dirs, std::size_t n_components) {
  if (acts.dim() != dirs.dim()) {
    throw InputError(fmt::format("project: activation dim {} does not match direction dim {}", acts.dim(), dirs.dim()));
  }
  if (n_components > dirs.k()) {
    throw InputError(fmt::format("project: requested {} components, direction set has {}", n_components, dirs.k()));
  }
  Matrix out(acts.size(), n_components);
  std::vector<double> centered(acts.dim());
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const auto r = acts.rows.row(i);
    for (std::size_t c = 0; c < centered.size(); ++c) centered[c] = r[c] - dirs.mean[c];
    for (std::size_t j = 0; j < n_components; ++j) out(i, j) = dot(centered, dirs.component(j));
  }
  return out;
}

VarianceProfile layer_variance_profile(std::span<const ActivationMatrix> layers, std::size_t k, unsigned threads,
                                       const PowerIterationOptions& options) {
  if (layers.empty()) throw InputError("layer_variance_profile: empty dump");
  VarianceProfile profile;
  profile.ratios = Matrix(layers.size(), k);
  std::vector<DirectionLayer> fits(layers.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, layers.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < layers.size(); ++i) fits[i] = fit_directions(layers[i], k, options);
  } else {
    for (std::size_t start = 0; start < layers.size(); start += workers) {
      std::vector<std::future<DirectionLayer>> pending;
      const std::size_t stop = std::min(layers.size(), start + workers);
      for (std::size_t i = start; i < stop; ++i) {
        pending.push_back(std::async(std::launch::async, [&, i] { return fit_directions(layers[i], k, options); }));
      }
      for (std::size_t i = start; i < stop; ++i) fits[i] = pending[i - start].get();
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    profile.layer_indices.push_back(layers[i].layer_index);
    for (std::size_t j = 0; j < k; ++j) profile.ratios(i, j) = fits[i].explained_variance_ratio[j];
  }
  return profile;
}

double cluster_separation(std::span<const double> values, std::span<const std::string> labels) {
  if (values.size() != labels.size()) throw InputError("cluster_separation: values/labels length mismatch");
  const auto languages = ordered_languages(labels);
  if (languages.size() < 2) throw InputError("cluster_separation: need at least two languages");
  std::vector<double> sum(languages.size(), 0.0), sq(languages.size(), 0.0);
  std::vector<std::size_t> count(languages.size(), 0);
  auto index_of = [&](const std::string& l) {
    return static_cast<std::size_t>(std::find(languages.begin(), languages.end(), l) - languages.begin());
  };
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto li = index_of(labels[i]);
    sum[li] += values[i];
    ++count[li];
  }
  std::vector<double> means(languages.size());
  for (std::size_t l = 0; l < languages.size(); ++l) means[l] = sum[l] / static_cast<double>(count[l]);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto li = index_of(labels[i]);
    sq[li] += (values[i] - means[li]) * (values[i] - means[li]);
  }
  double pooled = 0.0;
  for (std::size_t l = 0; l < languages.size(); ++l) pooled += sq[l] / static_cast<double>(count[l]);
  pooled = std::sqrt(pooled / static_cast<double>(languages.size()));
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) min_gap = std::min(min_gap, std::abs(means[a] - means[b]));
  }
  if (pooled == 0.0) return min_gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return min_gap / pooled;
}

void save_directions(const fs::path& dir, const DirectionSet& set, const nlohmann::json& extra) {
  if (set.layers.empty()) throw InputError("save_directions: empty direction set");
  fs::create_directories(dir);
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  const auto k = set.k();
  const auto d = set.layers.begin()->second.dim();
  meta["format"] = "latsteer-directions/1";
  meta["k"] = k;
  meta["hidden_dim"] = d;
  meta["languages"] = set.languages;
  meta["manifest_sha256"] = set.manifest_sha256;
  meta["sign_convention"] = kSignConvention;
  meta["tensor_layout"] = "row 0 = mean, rows 1..k = unit components";
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& [index, layer] : set.layers) {
    if (layer.k() != k || layer.dim() != d) throw InputError("save_directions: inconsistent layer shapes");
    const auto file = fmt::format("directions_layer_{}.lstens", index);
    std::vector<float> payload;
    payload.reserve((k + 1) * d);
    for (double x : layer.mean) payload.push_back(static_cast<float>(x));
    for (double x : layer.components.data) payload.push_back(static_cast<float>(x));
    const std::uint64_t shape[2] = {k + 1, d};
    tensor_store::write_tensor(dir / file, shape, payload);
    layers.push_back({{"layer", index},
                      {"file", file},
                      {"explained_variance", layer.explained_variance},
                      {"explained_variance_ratio", layer.explained_variance_ratio},
                      {"total_variance", layer.total_variance}});
  }
  meta["layers"] = layers;
  tensor_store::write_json_file(dir / "directions.json", meta);
}

DirectionSet load_directions(const fs::path& dir) {
  const auto meta_path = dir / "directions.json";
  if (!fs::exists(meta_path)) throw InputError("directions not found: " + meta_path.string());
  const auto meta = tensor_store::read_json_file(meta_path);
  DirectionSet set;
  try {
    const auto k = meta.at("k").get<std::size_t>();
    const auto d = meta.at("hidden_dim").get<std::size_t>();
    set.languages = meta.at("languages").get<std::vector<std::string>>();
    set.manifest_sha256 = meta.value("manifest_sha256", std::string());
    for (const auto& entry : meta.at("layers")) {
      DirectionLayer layer;
      layer.layer_index = entry.at("layer").get<int>();
      const auto t = tensor_store::read_tensor(dir / entry.at("file").get<std::string>());
      if (t.shape.size() != 2 || t.shape[0] != k + 1 || t.shape[1] != d) {
        throw InputError(fmt::format("directions layer {}: tensor shape mismatch", layer.layer_index));
      }
      layer.mean.assign(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(d));
      layer.components = Matrix(k, d);
      std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(d), t.data.end(), layer.components.data.begin());
      layer.explained_variance = entry.at("explained_variance").get<std::vector<double>>();
      layer.explained_variance_ratio = entry.at("explained_variance_ratio").get<std::vector<double>>();
      layer.total_variance = entry.value("total_variance", 0.0);
      set.layers.emplace(layer.layer_index, std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("directions.json: ") + e.what());
  }
  return set;
}

}  // namespace latsteer
