// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "latsteer/direction_finder.hpp"
#include "latsteer/error.hpp"
#include "latsteer/hashing.hpp"
#include "latsteer/synth_oracle.hpp"
#include "oracle/jacobi_eigen.hpp"
#include "test_util.hpp"

using namespace latsteer;
using namespace latsteer::synth;

TEST_CASE("GaussianSource: uniforms in (0, 1] and sane normal moments") {
  GaussianSource g(1);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = g.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("zero noise, two languages at +-c: PC1 is the planted direction") {
  SynthSpec spec;
  spec.d = 16;
  spec.languages = {{"en", 5.0}, {"zh", -5.0}};
  spec.semantic_std = 0.0;
  spec.noise_std = 0.0;
  spec.layers = 2;
  spec.crit_layer = 1;
  spec.seed = 3;
  const auto dump = generate_dump(spec, 10);
  const auto fit = fit_directions(dump.layers[1], 1);
  CHECK(oracle::abs_cosine(dump.truth.direction, fit.component(0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
  // Sign convention: en sits on the positive side, as does +v*.
  CHECK(dot(dump.truth.direction, fit.component(0)) > 0.0);
  // Before the critical layer there is nothing to find.
  CHECK_THROWS_AS(fit_directions(dump.layers[0], 1), ComputeError);
}

TEST_CASE("generate_dump: shapes, labels and the planted direction") {
  const auto spec = SynthSpec::defaults(5);
  const auto dump = generate_dump(spec, 7);
  CHECK(dump.layers.size() == 8);
  CHECK(dump.manifest.languages == std::vector<std::string>{"en", "es", "ru", "zh", "hi"});
  CHECK(dump.layers[0].size() == 35);
  CHECK(dump.layers[0].dim() == 64);
  CHECK(std::abs(norm(dump.truth.direction) - 1.0) < 1e-12);
  CHECK(dump.truth.crit_layer == 6);
  CHECK(dump.layers[3].labels[7] == "es");
}

TEST_CASE("generate_dump: same seed, same bytes on disk") {
  testutil::TempDir tmp;
  const auto spec = SynthSpec::defaults(77);
  write_dump(tmp.path() / "a", generate_dump(spec, 5));
  write_dump(tmp.path() / "b", generate_dump(spec, 5));
  for (const char* f : {"manifest.json", "labels.json", "layer_0.lstens", "layer_7.lstens", "ground_truth.json"}) {
    CHECK(sha256_file(tmp.path() / "a" / f) == sha256_file(tmp.path() / "b" / f));
  }
  const auto other = generate_dump(SynthSpec::defaults(78), 5);
  CHECK_FALSE(other.layers[7].rows == generate_dump(spec, 5).layers[7].rows);
}

TEST_CASE("default SynthSpec: planted direction recovered at the last layer") {
  const auto dump = generate_dump(SynthSpec::defaults(8), 50);
  const auto fit = fit_directions(dump.layers.back(), 1);
  CHECK(oracle::abs_cosine(dump.truth.direction, fit.component(0)) >= 0.99);
}

TEST_CASE("SynthSpec::validate") {
  auto spec = SynthSpec::defaults();
  CHECK_NOTHROW(spec.validate());
  auto close = spec;
  close.languages[0].offset_scale = 2.0;
  CHECK_THROWS_AS(close.validate(), InputError);
  auto late = spec;
  late.crit_layer = 8;
  CHECK_THROWS_AS(late.validate(), InputError);
  auto flat = spec;
  flat.d = 1;
  CHECK_THROWS_AS(flat.validate(), InputError);
  CHECK_THROWS_AS(generate_dump(spec, 1), InputError);
}

TEST_CASE("next-token family: steering at s* restores the reference, s = 0 leaves the mix") {
  const auto spec = SynthSpec::defaults(4);
  for (double s_star : {-2.9, -1.5, 1.0}) {
    const auto fam = generate_nexttoken_family(spec, s_star);
    for (const auto& t : fam(s_star)) {
      REQUIRE(t.steered);
      REQUIRE(t.steered->entries.size() == t.reference.entries.size());
      for (std::size_t i = 0; i < t.reference.entries.size(); ++i) {
        CHECK(t.steered->entries[i].token_id == t.reference.entries[i].token_id);
        CHECK(std::abs(t.steered->entries[i].logprob - t.reference.entries[i].logprob) < 1e-12);
      }
    }
    for (const auto& t : fam(0.0)) CHECK(*t.steered == TopKDistribution{t.mixed->sample_id, ContextTag::steered, t.mixed->entries});
  }
  const auto fam = generate_nexttoken_family(spec, -1.5);
  const auto a = fam(0.3);
  const auto b = fam(0.3);
  REQUIRE(a.size() == 16);
  CHECK(a[5].steered == b[5].steered);
  CHECK(a[0].reference.k() == 128);
  CHECK_THROWS_AS(generate_nexttoken_family(spec, 5.0), InputError);
}

TEST_CASE("next-token family: s* = 0 has its minimum at 0") {
  const auto fam = generate_nexttoken_family(SynthSpec::defaults(4), 0.0);
  const auto at0 = mean_steered_kl(fam(0.0), kDefaultTopK);
  CHECK(at0 < mean_steered_kl(fam(0.1), kDefaultTopK));
  CHECK(at0 < mean_steered_kl(fam(-0.1), kDefaultTopK));
}
