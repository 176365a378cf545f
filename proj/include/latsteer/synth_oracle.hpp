// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multilingual dumps and next-token families with a planted language
// direction, so the whole pipeline can be checked without a model.
//
// Randomness: std::mt19937_64 seeded with SynthSpec::seed. A uniform double is
// ((x >> 11) + 1) * 2^-53 in (0, 1]; normals come from Box-Muller on
// consecutive uniform pairs (cosine branch first, sine branch cached). Draw
// order for a dump: planted direction (d normals), semantic vectors (sample
// major, d normals each), then noise per layer, language, sample, coordinate.
// Next-token families use a second generator seeded with seed ^ kFamilyStream.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "latsteer/activation.hpp"
#include "latsteer/divergence.hpp"
#include "latsteer/tensor_store.hpp"

namespace latsteer::synth {

inline constexpr std::uint64_t kFamilyStream = 0x9E3779B97F4A7C15ULL;

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}
  double uniform();
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

struct SynthLanguage {
  std::string code;
  // Offset of this language is offset_scale * planted direction.
  double offset_scale = 0.0;
};

struct SynthSpec {
  std::size_t d = 64;
  std::vector<SynthLanguage> languages;
  double semantic_std = 1.0;
  double noise_std = 0.1;
  int layers = 8;
  int crit_layer = 6;
  std::uint64_t seed = 0;

  void validate() const;

  // d = 64, five languages (en es ru zh hi), sigma_sem = 1, sigma_noise = 0.1,
  // 8 layers with offsets from layer 6. Offsets are 5 * (2j + 1): every one is
  // at least 5 sigma_sem from zero and neighbours sit 10 sigma_sem apart, so
  // the planted axis carries ~200 units of between-language variance against
  // ~1 per semantic direction.
  static SynthSpec defaults(std::uint64_t seed = 0);
};

struct GroundTruth {
  std::vector<double> direction;
  std::vector<SynthLanguage> offsets;
  int crit_layer = 0;
};

struct SynthDump {
  tensor_store::CorpusManifest manifest;
  std::vector<ActivationMatrix> layers;
  GroundTruth truth;
};

SynthDump generate_dump(const SynthSpec& spec, std::size_t n_per_language);

nlohmann::json to_json(const GroundTruth& truth);
// Standard dump layout plus ground_truth.json.
void write_dump(const std::filesystem::path& dir, const SynthDump& dump);

struct FamilyOptions {
  std::size_t samples = 16;
  std::size_t vocab = 128;
  double logit_std = 2.0;
  // Logit shift applied to target-language tokens in the mixed context.
  double mix_shift = 4.0;
};

using NextTokenFamily = std::function<std::vector<DistributionTriple>(double strength)>;

// Reference logits r, mixed logits r + a*u where u lifts the target-language
// half of the vocabulary, steered logits r + a*g(s)*u with g(s) = 1 - s/s* so
// that s = 0 reproduces the mixed context and s = s* the reference. For s* = 0
// steering never helps: g(s) = 1 + |s|. Distributions cover the full vocabulary.
NextTokenFamily generate_nexttoken_family(const SynthSpec& spec, double s_star, const FamilyOptions& options = {});

}  // namespace latsteer::synth
