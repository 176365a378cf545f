// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "latsteer/divergence.hpp"
#include "latsteer/error.hpp"
#include "latsteer/synth_oracle.hpp"
#include "test_util.hpp"

using namespace latsteer;

namespace {

const std::filesystem::path kData = LATSTEER_TEST_DATA;

TopKDistribution dist(std::vector<double> probs, ContextTag tag = ContextTag::reference_en, std::int64_t first_id = 0) {
  TopKDistribution d;
  d.sample_id = "s";
  d.context_tag = tag;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    d.entries.push_back({first_id + static_cast<std::int64_t>(i), "t" + std::to_string(first_id + i), std::log(probs[i])});
  }
  return d;
}

// Direct formula on already-restricted probabilities.
double kl_direct(const std::vector<double>& p, const std::vector<double>& q) {
  double sp = 0, sq = 0;
  for (double x : p) sp += x;
  for (double x : q) sq += x;
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] / sp * std::log((p[i] / sp) / (q[i] / sq));
  return kl;
}

}  // namespace

TEST_CASE("kl_topk: identical distributions give exactly zero") {
  const auto p = dist({0.5, 0.3, 0.2});
  CHECK(kl_topk(p, p, 3) == 0.0);
  CHECK(kl_topk(p, p, 2) == 0.0);
}

TEST_CASE("kl_topk: uniform vs (0.9, 0.1)") {
  const double v = kl_topk(dist({0.5, 0.5}), dist({0.9, 0.1}), 2);
  CHECK(std::abs(v - 0.5108) <= 1e-4);
  CHECK(v == doctest::Approx(kl_direct({0.5, 0.5}, {0.9, 0.1})).epsilon(1e-12));
}

TEST_CASE("kl_topk: restriction and renormalisation on the reference top-k") {
  // Reference top-2 is ids {0, 1}; candidate mass outside the support is dropped.
  const auto ref = dist({0.5, 0.3, 0.2});
  const auto cand = dist({0.2, 0.2, 0.6});
  CHECK(kl_topk(ref, cand, 2) == doctest::Approx(kl_direct({0.5, 0.3}, {0.2, 0.2})).epsilon(1e-12));

  // A missing candidate token is floored.
  const auto partial = dist({0.6, 0.3});
  const double floored = kl_topk(ref, partial, 3);
  CHECK(floored == doctest::Approx(kl_direct({0.5, 0.3, 0.2}, {0.6, 0.3, 1e-12})).epsilon(1e-12));
}

TEST_CASE("kl_topk: errors") {
  const auto p = dist({0.5, 0.5});
  CHECK_THROWS_WITH_AS(kl_topk(p, p, 3), doctest::Contains("exceeds reference support"), InputError);
  CHECK_THROWS_AS(kl_topk(p, p, 0), InputError);
  CHECK_THROWS_AS(kl_topk(TopKDistribution{}, p, 1), InputError);
  CHECK_THROWS_AS(kl_topk(p, TopKDistribution{}, 1), InputError);
}

TEST_CASE("property: non-negativity and candidate order invariance") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 20;
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = u(rng);
      q[i] = u(rng);
      sp += p[i];
      sq += q[i];
    }
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    const auto ref = dist(p);
    auto cand = dist(q);
    const std::size_t k = 1 + rng() % n;
    const double base = kl_topk(ref, cand, k);
    CHECK(base >= 0.0);
    std::shuffle(cand.entries.begin(), cand.entries.end(), rng);
    CHECK(kl_topk(ref, cand, k) == base);
  }
}

TEST_CASE("property: floor sensitivity on fixtures") {
  const auto dists = read_jsonl(kData / "golden.jsonl");
  for (const auto& t : group_triples(dists)) {
    const auto k = t.reference.k();
    for (const auto* cand : {&*t.mixed, &*t.steered}) {
      const double a = kl_topk(t.reference, *cand, k, 1e-12);
      const double b = kl_topk(t.reference, *cand, k, 1e-10);
      CHECK(std::abs(a - b) <= 0.01 * std::max(a, b));
    }
  }
  const auto family = synth::generate_nexttoken_family(synth::SynthSpec::defaults(1), -1.5);
  for (const auto& t : family(0.0)) {
    const double a = kl_topk(t.reference, *t.mixed, kDefaultTopK, 1e-12);
    const double b = kl_topk(t.reference, *t.mixed, kDefaultTopK, 1e-10);
    CHECK(std::abs(a - b) <= 0.01 * std::max(a, b));
  }
}

TEST_CASE("read_jsonl: golden fixture") {
  const auto dists = read_jsonl(kData / "golden.jsonl");
  REQUIRE(dists.size() == 6);
  CHECK(dists[0].sample_id == "0");
  CHECK(dists[3].sample_id == "1");
  CHECK(dists[1].context_tag == ContextTag::mixed_unsteered);
  CHECK(dists[1].entries.front().token_text == "muy");
  CHECK(dists[0].entries[1].token_id == 12);
  CHECK(dists[0].entries[1].logprob == -1.2039728043259361);

  const auto triples = group_triples(dists);
  REQUIRE(triples.size() == 2);
  const auto& s0 = triples[0];
  CHECK(kl_topk(s0.reference, *s0.mixed, 3) ==
        doctest::Approx(kl_direct({0.5, 0.3, 0.2}, {0.25, 0.12, 0.08})).epsilon(1e-9));
  CHECK(kl_topk(s0.reference, *s0.steered, 3) ==
        doctest::Approx(kl_direct({0.5, 0.3, 0.2}, {0.45, 0.35, 0.2})).epsilon(1e-9));
  const auto& s1 = triples[1];
  CHECK(std::abs(kl_topk(s1.reference, *s1.mixed, 2) - 0.5108) <= 1e-4);
  CHECK(kl_topk(s1.reference, *s1.steered, 2) == 0.0);

  // Re-serialising and parsing again is lossless.
  std::istringstream again(to_jsonl(dists));
  CHECK(read_jsonl(again, "again") == dists);
}

TEST_CASE("read_jsonl: malformed line reports its number") {
  CHECK_THROWS_WITH_AS(read_jsonl(kData / "corrupt.jsonl"), doctest::Contains("corrupt.jsonl:2"), InputError);
  std::istringstream bad_tag(R"({"sample_id": "x", "context_tag": "other", "k": 1, "entries": [{"token_id": 1, "token_text": "a", "logprob": 0}]})");
  CHECK_THROWS_WITH_AS(read_jsonl(bad_tag, "mem"), doctest::Contains("mem:1"), InputError);
  std::istringstream bad_k(R"({"sample_id": "x", "context_tag": "steered", "k": 2, "entries": [{"token_id": 1, "token_text": "a", "logprob": 0}]})");
  CHECK_THROWS_AS(read_jsonl(bad_k, "mem"), InputError);
  CHECK_THROWS_AS(read_jsonl(kData / "missing.jsonl"), InputError);
}

TEST_CASE("group_triples: duplicates and missing references") {
  auto a = dist({0.5, 0.5});
  auto b = dist({0.5, 0.5}, ContextTag::steered);
  std::vector<TopKDistribution> dup{a, a};
  CHECK_THROWS_AS(group_triples(dup), InputError);
  std::vector<TopKDistribution> orphan{b};
  CHECK_THROWS_WITH_AS(group_triples(orphan), doctest::Contains("missing reference_en"), InputError);
}

TEST_CASE("write_jsonl round-trip") {
  testutil::TempDir tmp;
  std::vector<TopKDistribution> dists{dist({0.7, 0.3}), dist({0.6, 0.4}, ContextTag::mixed_unsteered)};
  write_jsonl(tmp.path() / "d.jsonl", dists);
  CHECK(read_jsonl(tmp.path() / "d.jsonl") == dists);
}

TEST_CASE("token_shift_table") {
  const auto dists = read_jsonl(kData / "golden.jsonl");
  const auto t = token_shift_table(dists[0], dists[0], dists[0], 3);
  CHECK(t.reference == t.unsteered);
  CHECK(t.reference == t.steered);

  const auto top1 = token_shift_table(dists[0], dists[1], dists[2], 1);
  CHECK(top1.reference == std::vector<std::string>{"very"});
  CHECK(top1.unsteered == std::vector<std::string>{"muy"});
  CHECK(top1.steered == std::vector<std::string>{"very"});
  CHECK(token_shift_csv(top1).find("muy") != std::string::npos);

  CHECK_THROWS_AS(token_shift_table(dists[0], dists[1], dists[2], 4), InputError);
}

TEST_CASE("reduction_summary") {
  auto report_of = [](std::string pair, double u, double s) {
    KLReport r;
    r.language_pair = std::move(pair);
    r.samples.push_back({"0", u, s});
    return r;
  };
  SUBCASE("8.94 to 5.19 is a 42% reduction") {
    const auto sum = reduction_summary(report_of("en-zh", 8.94, 5.19));
    CHECK(sum.pairs[0].reduction == doctest::Approx(0.4195).epsilon(1e-4));
  }
  SUBCASE("identical before and after") {
    CHECK(reduction_summary(report_of("en-hi", 8.73, 8.73)).pairs[0].reduction == 0.0);
  }
  SUBCASE("four pairs macro-average") {
    const std::vector<KLReport> reports{report_of("en-zh", 8.94, 5.19), report_of("en-es", 6.37, 5.86),
                                        report_of("en-ru", 7.78, 5.43), report_of("en-hi", 8.73, 8.73)};
    const auto sum = reduction_summary(reports);
    const double expected = ((8.94 - 5.19) / 8.94 + (6.37 - 5.86) / 6.37 + (7.78 - 5.43) / 7.78) / 4.0;
    CHECK(sum.macro_average == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(sum.macro_average - 0.20) < 0.005);
    const auto csv = reduction_summary_csv(sum);
    CHECK(csv.find("8.94 → 5.19") != std::string::npos);
    CHECK(csv.find("macro_average") != std::string::npos);
  }
  SUBCASE("zero baseline is flagged") {
    const auto sum = reduction_summary(report_of("en-xx", 0.0, 0.0));
    CHECK(sum.pairs[0].zero_baseline);
    CHECK(sum.pairs[0].reduction == 0.0);
  }
  SUBCASE("empty") {
    CHECK_THROWS_AS(reduction_summary(std::span<const KLReport>{}), InputError);
    CHECK_THROWS_AS(reduction_summary(KLReport{}), InputError);
  }
}

TEST_CASE("build_kl_report aggregates per-sample values") {
  const auto triples = group_triples(read_jsonl(kData / "golden.jsonl"));
  const auto report = build_kl_report(std::span(triples).subspan(1), 2, "en-es", 1.0);
  CHECK(report.mean_unsteered() == doctest::Approx(0.5108).epsilon(1e-3));
  CHECK(report.mean_steered() == 0.0);
  CHECK_THROWS_AS(build_kl_report(triples, 3, "en-es", 1.0), InputError);
  const auto j = to_json(report);
  CHECK(j.at("language_pair") == "en-es");
  CHECK(kl_report_csv(report).rfind("sample_id,kl_unsteered,kl_steered\n", 0) == 0);
}

TEST_CASE("distribution family directory") {
  testutil::TempDir tmp;
  DistributionFamily fam;
  fam.dir = tmp.path();
  fam.language_pair = "en-zh";
  const auto gen = synth::generate_nexttoken_family(synth::SynthSpec::defaults(2), -1.5);
  for (double s : {-1.5, 0.0}) {
    std::vector<TopKDistribution> all;
    for (const auto& t : gen(s)) {
      all.push_back(t.reference);
      all.push_back(*t.mixed);
      all.push_back(*t.steered);
    }
    write_jsonl(tmp.path() / family_file_name(s), all);
    fam.entries.push_back({s, family_file_name(s)});
  }
  write_family_index(fam);
  const auto back = read_family(tmp.path());
  CHECK(back.language_pair == "en-zh");
  REQUIRE(back.find(-1.5 + 1e-9) != nullptr);
  CHECK(back.find(0.5) == nullptr);
  CHECK(back.load(0.0).size() == 16);
  CHECK_THROWS_AS(back.load(0.5), InputError);
  CHECK_THROWS_AS(read_family(tmp.path() / "none"), InputError);
}
