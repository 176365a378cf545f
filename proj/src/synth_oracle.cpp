// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/synth_oracle.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <set>

#include <fmt/core.h>

#include "latsteer/error.hpp"

namespace latsteer::synth {

double GaussianSource::uniform() {
  return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
}

double GaussianSource::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

void SynthSpec::validate() const {
  if (d < 2) throw InputError("synth: d must be >= 2");
  if (languages.size() < 2) throw InputError("synth: need at least two languages");
  std::set<std::string> codes;
  for (const auto& l : languages) {
    if (l.code.empty() || !codes.insert(l.code).second) throw InputError("synth: language codes must be unique and non-empty");
    if (!(std::abs(l.offset_scale) >= 3.0 * semantic_std)) {
      throw InputError(fmt::format("synth: offset of '{}' ({}) is below 3 * semantic_std", l.code, l.offset_scale));
    }
  }
  if (!(semantic_std >= 0.0) || !(noise_std >= 0.0)) throw InputError("synth: standard deviations must be >= 0");
  if (layers < 1) throw InputError("synth: layers must be >= 1");
  if (crit_layer < 0 || crit_layer >= layers) throw InputError("synth: crit_layer must lie in [0, layers)");
}

SynthSpec SynthSpec::defaults(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  const char* codes[] = {"en", "es", "ru", "zh", "hi"};
  constexpr double kOffsetMagnitude = 5.0;
  for (int j = 0; j < 5; ++j) spec.languages.push_back({codes[j], kOffsetMagnitude * (2 * j + 1)});
  return spec;
}

SynthDump generate_dump(const SynthSpec& spec, std::size_t n_per_language) {
  spec.validate();
  if (n_per_language < 2) throw InputError("synth: need at least two samples per language");
  GaussianSource rng(spec.seed);
  const std::size_t d = spec.d;

  SynthDump dump;
  dump.truth.crit_layer = spec.crit_layer;
  dump.truth.offsets = spec.languages;
  dump.truth.direction.resize(d);
  for (auto& x : dump.truth.direction) x = rng.normal();
  const double n = norm(dump.truth.direction);
  for (auto& x : dump.truth.direction) x /= n;

  Matrix semantic(n_per_language, d);
  for (auto& x : semantic.data) x = spec.semantic_std * rng.normal();

  auto& m = dump.manifest;
  for (const auto& l : spec.languages) m.languages.push_back(l.code);
  m.samples_per_language = n_per_language;
  m.layers = static_cast<std::size_t>(spec.layers);
  m.hidden_dim = d;
  m.pooling = tensor_store::Pooling::mean;
  m.source = fmt::format("synthetic: seed={} d={} sigma_sem={} sigma_noise={} crit_layer={}", spec.seed, d,
                         spec.semantic_std, spec.noise_std, spec.crit_layer);
  const auto labels = tensor_store::canonical_labels(m);

  for (int layer = 0; layer < spec.layers; ++layer) {
    ActivationMatrix acts;
    acts.layer_index = layer;
    acts.labels = labels;
    acts.languages = m.languages;
    acts.rows = Matrix(m.total_rows(), d);
    const bool offsets_on = layer >= spec.crit_layer;
    for (std::size_t j = 0; j < spec.languages.size(); ++j) {
      const double scale = offsets_on ? spec.languages[j].offset_scale : 0.0;
      for (std::size_t i = 0; i < n_per_language; ++i) {
        auto row = acts.rows.row(j * n_per_language + i);
        const auto sem = semantic.row(i);
        for (std::size_t c = 0; c < d; ++c) {
          row[c] = sem[c] + scale * dump.truth.direction[c] + spec.noise_std * rng.normal();
        }
      }
    }
    dump.layers.push_back(std::move(acts));
  }
  return dump;
}

nlohmann::json to_json(const GroundTruth& truth) {
  nlohmann::json offsets = nlohmann::json::array();
  for (const auto& l : truth.offsets) offsets.push_back({{"language", l.code}, {"scale", l.offset_scale}});
  return {{"direction", truth.direction}, {"offsets", offsets}, {"crit_layer", truth.crit_layer}};
}

void write_dump(const std::filesystem::path& dir, const SynthDump& dump) {
  tensor_store::write_dump(dir, dump.manifest, dump.layers);
  tensor_store::write_json_file(dir / "ground_truth.json", to_json(dump.truth));
}

namespace {

struct FamilyState {
  std::string target_code;
  FamilyOptions options;
  double s_star = 0.0;
  std::vector<std::vector<double>> reference_logits;
  std::vector<std::vector<double>> shift;
};

TopKDistribution make_distribution(const FamilyState& st, std::size_t sample, double g, ContextTag tag) {
  const auto& r = st.reference_logits[sample];
  const auto& u = st.shift[sample];
  const double amount = st.options.mix_shift * g;
  std::vector<double> logits(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) logits[t] = r[t] + amount * u[t];
  double peak = logits[0];
  for (double x : logits) peak = std::max(peak, x);
  double total = 0.0;
  for (double x : logits) total += std::exp(x - peak);
  const double lse = peak + std::log(total);

  TopKDistribution dist;
  dist.sample_id = fmt::format("synth-{}", sample);
  dist.context_tag = tag;
  const std::size_t half = r.size() / 2;
  for (std::size_t t = 0; t < r.size(); ++t) {
    const auto text = t < half ? fmt::format("en{}", t) : fmt::format("{}{}", st.target_code, t);
    dist.entries.push_back({static_cast<std::int64_t>(t), text, logits[t] - lse});
  }
  dist.sort_entries();
  return dist;
}

}  // namespace

NextTokenFamily generate_nexttoken_family(const SynthSpec& spec, double s_star, const FamilyOptions& options) {
  spec.validate();
  if (!(s_star >= -4.0 && s_star <= 4.0)) throw InputError(fmt::format("synth: s_star {} outside [-4, 4]", s_star));
  if (options.vocab < 4 || options.samples < 1) throw InputError("synth: family needs vocab >= 4 and samples >= 1");

  auto st = std::make_shared<FamilyState>();
  st->target_code = spec.languages[1].code;
  st->options = options;
  st->s_star = s_star;
  GaussianSource rng(spec.seed ^ kFamilyStream);
  const std::size_t half = options.vocab / 2;
  for (std::size_t i = 0; i < options.samples; ++i) {
    std::vector<double> r(options.vocab), u(options.vocab, 0.0);
    for (auto& x : r) x = options.logit_std * rng.normal();
    for (std::size_t t = half; t < options.vocab; ++t) u[t] = 1.0 + std::abs(rng.normal());
    st->reference_logits.push_back(std::move(r));
    st->shift.push_back(std::move(u));
  }

  return [st](double strength) {
    const double g = st->s_star != 0.0 ? 1.0 - strength / st->s_star : 1.0 + std::abs(strength);
    std::vector<DistributionTriple> out;
    out.reserve(st->reference_logits.size());
    for (std::size_t i = 0; i < st->reference_logits.size(); ++i) {
      DistributionTriple t;
      t.reference = make_distribution(*st, i, 0.0, ContextTag::reference_en);
      t.mixed = make_distribution(*st, i, 1.0, ContextTag::mixed_unsteered);
      t.steered = make_distribution(*st, i, g, ContextTag::steered);
      out.push_back(std::move(t));
    }
    return out;
  };
}

}  // namespace latsteer::synth
