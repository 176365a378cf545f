// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Top-k next-token distributions and KL divergence between them.
//
// JSON-lines record, one per (sample, context):
//   {"sample_id": "17", "context_tag": "reference_en", "k": 3,
//    "entries": [{"token_id": 11, "token_text": "very", "logprob": -0.4}, ...]}
// context_tag is one of reference_en, mixed_unsteered, steered. sample_id may
// be a string or an integer; it is kept as text. `k` equals the entry count.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace latsteer {

enum class ContextTag { reference_en, mixed_unsteered, steered };

std::string_view to_string(ContextTag tag);
ContextTag context_tag_from_string(std::string_view text);

struct TokenEntry {
  std::int64_t token_id = 0;
  std::string token_text;
  double logprob = 0.0;

  bool operator==(const TokenEntry&) const = default;
};

struct TopKDistribution {
  std::string sample_id;
  ContextTag context_tag = ContextTag::reference_en;
  std::vector<TokenEntry> entries;

  std::size_t k() const { return entries.size(); }
  // Unique ids, finite logprobs, total probability <= 1 + 1e-6, non-empty.
  void validate() const;
  // Entries by descending probability; equal logprobs by ascending token id.
  void sort_entries();

  bool operator==(const TopKDistribution&) const = default;
};

inline constexpr double kMissingTokenFloor = 1e-12;
inline constexpr std::size_t kDefaultTopK = 100;

// KL(reference || candidate) in nats on the support of the reference's top-k
// tokens. Both sides are restricted to that support and renormalised; tokens
// the candidate lacks get mass `floor` before renormalisation.
double kl_topk(const TopKDistribution& reference, const TopKDistribution& candidate, std::size_t k,
               double floor = kMissingTokenFloor);

struct TokenShiftTable {
  std::vector<std::string> reference;
  std::vector<std::string> unsteered;
  std::vector<std::string> steered;
};

TokenShiftTable token_shift_table(const TopKDistribution& reference, const TopKDistribution& unsteered,
                                  const TopKDistribution& steered, std::size_t n);
// Original,Unsteered,Steered rows.
std::string token_shift_csv(const TokenShiftTable& table);

struct DistributionTriple {
  TopKDistribution reference;
  std::optional<TopKDistribution> mixed;
  std::optional<TopKDistribution> steered;
};

struct SampleKL {
  std::string sample_id;
  double kl_unsteered = 0.0;
  double kl_steered = 0.0;
};

struct KLReport {
  std::string language_pair;
  double strength = 0.0;
  std::size_t top_k = kDefaultTopK;
  std::vector<SampleKL> samples;

  double mean_unsteered() const;
  double mean_steered() const;
};

// Every triple needs both a mixed and a steered distribution.
KLReport build_kl_report(std::span<const DistributionTriple> triples, std::size_t k, std::string language_pair,
                         double strength);

// Mean KL(reference || steered) over the triples.
double mean_steered_kl(std::span<const DistributionTriple> triples, std::size_t k);

struct PairReduction {
  std::string language_pair;
  double kl_unsteered = 0.0;
  double kl_steered = 0.0;
  double reduction = 0.0;
  // Set when the unsteered baseline is zero; reduction is then reported as 0.
  bool zero_baseline = false;
};

struct ReductionSummary {
  std::vector<PairReduction> pairs;
  double macro_average = 0.0;
};

ReductionSummary reduction_summary(std::span<const KLReport> reports);
ReductionSummary reduction_summary(const KLReport& report);

nlohmann::json to_json(const TopKDistribution& dist);
TopKDistribution distribution_from_json(const nlohmann::json& j);

// Errors carry "<source>:<line>".
std::vector<TopKDistribution> read_jsonl(std::istream& in, const std::string& source = "<stream>");
std::vector<TopKDistribution> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(std::span<const TopKDistribution> dists);
void write_jsonl(const std::filesystem::path& path, std::span<const TopKDistribution> dists);

// Groups records by sample_id in first-appearance order. Each sample needs a
// reference_en record; duplicate tags for one sample are rejected.
std::vector<DistributionTriple> group_triples(std::span<const TopKDistribution> dists);

nlohmann::json to_json(const KLReport& report);
// sample_id,kl_unsteered,kl_steered
std::string kl_report_csv(const KLReport& report);
// language_pair,kl_unsteered,kl_steered,change,reduction
std::string reduction_summary_csv(const ReductionSummary& summary);

// A directory of JSONL files, one per steering strength, indexed by
// family.json: {"language_pair": "en-zh", "entries": [{"strength": -2.9,
// "file": "dists_s-2.900000.jsonl"}, ...]}. Each file holds reference,
// mixed and steered records for every sample at that strength.
struct FamilyEntry {
  double strength = 0.0;
  std::string file;
};

struct DistributionFamily {
  std::filesystem::path dir;
  std::string language_pair;
  std::vector<FamilyEntry> entries;

  // Entry whose strength is within 1e-6 of `strength`, or nullptr.
  const FamilyEntry* find(double strength) const;
  std::vector<DistributionTriple> load(double strength) const;
};

std::string family_file_name(double strength);
DistributionFamily read_family(const std::filesystem::path& dir);
void write_family_index(const DistributionFamily& family);

}  // namespace latsteer
