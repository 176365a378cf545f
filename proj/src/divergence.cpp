// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>

#include "latsteer/error.hpp"

namespace latsteer {
namespace {

double log_sum_exp(std::span<const double> xs) {
  const double peak = *std::max_element(xs.begin(), xs.end());
  double total = 0.0;
  for (double x : xs) total += std::exp(x - peak);
  return peak + std::log(total);
}

std::vector<std::size_t> ranked(const TopKDistribution& dist) {
  std::vector<std::size_t> order(dist.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = dist.entries[a];
    const auto& eb = dist.entries[b];
    if (ea.logprob != eb.logprob) return ea.logprob > eb.logprob;
    return ea.token_id < eb.token_id;
  });
  return order;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view to_string(ContextTag tag) {
  switch (tag) {
    case ContextTag::reference_en: return "reference_en";
    case ContextTag::mixed_unsteered: return "mixed_unsteered";
    case ContextTag::steered: return "steered";
  }
  return "?";
}

ContextTag context_tag_from_string(std::string_view text) {
  if (text == "reference_en") return ContextTag::reference_en;
  if (text == "mixed_unsteered") return ContextTag::mixed_unsteered;
  if (text == "steered") return ContextTag::steered;
  throw InputError(fmt::format("unknown context_tag '{}'", text));
}

void TopKDistribution::validate() const {
  if (entries.empty()) throw InputError(fmt::format("sample {}: empty distribution", sample_id));
  std::unordered_set<std::int64_t> ids;
  double total = 0.0;
  for (const auto& e : entries) {
    if (!ids.insert(e.token_id).second) {
      throw InputError(fmt::format("sample {}: duplicate token_id {}", sample_id, e.token_id));
    }
    if (!std::isfinite(e.logprob)) throw InputError(fmt::format("sample {}: non-finite logprob", sample_id));
    total += std::exp(e.logprob);
  }
  if (total > 1.0 + 1e-6) {
    throw InputError(fmt::format("sample {}: probabilities sum to {} > 1", sample_id, total));
  }
}

void TopKDistribution::sort_entries() {
  const auto order = ranked(*this);
  std::vector<TokenEntry> sorted;
  sorted.reserve(entries.size());
  for (auto i : order) sorted.push_back(entries[i]);
  entries = std::move(sorted);
}

double kl_topk(const TopKDistribution& reference, const TopKDistribution& candidate, std::size_t k, double floor) {
  if (reference.entries.empty() || candidate.entries.empty()) throw InputError("kl_topk: empty distribution");
  if (k == 0) throw InputError("kl_topk: k must be >= 1");
  if (k > reference.entries.size()) {
    throw InputError(fmt::format("kl_topk: k = {} exceeds reference support of {} tokens (sample {})", k,
                                 reference.entries.size(), reference.sample_id));
  }
  if (!(floor > 0.0)) throw InputError("kl_topk: floor must be positive");

  std::unordered_map<std::int64_t, double> cand;
  cand.reserve(candidate.entries.size());
  for (const auto& e : candidate.entries) cand.emplace(e.token_id, e.logprob);

  const auto order = ranked(reference);
  std::vector<double> log_p(k), log_q(k);
  const double log_floor = std::log(floor);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& e = reference.entries[order[i]];
    log_p[i] = e.logprob;
    auto it = cand.find(e.token_id);
    log_q[i] = it == cand.end() ? log_floor : it->second;
  }
  const double norm_p = log_sum_exp(log_p);
  const double norm_q = log_sum_exp(log_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double lp = log_p[i] - norm_p;
    const double lq = log_q[i] - norm_q;
    kl += std::exp(lp) * (lp - lq);
  }
  return std::max(kl, 0.0);
}

TokenShiftTable token_shift_table(const TopKDistribution& reference, const TopKDistribution& unsteered,
                                  const TopKDistribution& steered, std::size_t n) {
  for (const auto* d : {&reference, &unsteered, &steered}) {
    if (n > d->entries.size()) {
      throw InputError(fmt::format("token_shift_table: n = {} exceeds {} distribution size {}", n,
                                   to_string(d->context_tag), d->entries.size()));
    }
  }
  auto column = [n](const TopKDistribution& d) {
    const auto order = ranked(d);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(d.entries[order[i]].token_text);
    return out;
  };
  return {column(reference), column(unsteered), column(steered)};
}

std::string token_shift_csv(const TokenShiftTable& table) {
  std::string out = "rank,original,unsteered,steered\n";
  for (std::size_t i = 0; i < table.reference.size(); ++i) {
    out += fmt::format("{},{},{},{}\n", i + 1, csv_field(table.reference[i]), csv_field(table.unsteered[i]),
                       csv_field(table.steered[i]));
  }
  return out;
}

double KLReport::mean_unsteered() const {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : samples) s += x.kl_unsteered;
  return s / static_cast<double>(samples.size());
}

double KLReport::mean_steered() const {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : samples) s += x.kl_steered;
  return s / static_cast<double>(samples.size());
}

KLReport build_kl_report(std::span<const DistributionTriple> triples, std::size_t k, std::string language_pair,
                         double strength) {
  if (triples.empty()) throw InputError("build_kl_report: no samples");
  KLReport report;
  report.language_pair = std::move(language_pair);
  report.strength = strength;
  report.top_k = k;
  for (const auto& t : triples) {
    if (!t.mixed || !t.steered) {
      throw InputError(fmt::format("sample {}: needs mixed_unsteered and steered distributions", t.reference.sample_id));
    }
    report.samples.push_back({t.reference.sample_id, kl_topk(t.reference, *t.mixed, k), kl_topk(t.reference, *t.steered, k)});
  }
  return report;
}

double mean_steered_kl(std::span<const DistributionTriple> triples, std::size_t k) {
  if (triples.empty()) throw InputError("mean_steered_kl: no samples");
  double total = 0.0;
  for (const auto& t : triples) {
    if (!t.steered) throw InputError(fmt::format("sample {}: missing steered distribution", t.reference.sample_id));
    total += kl_topk(t.reference, *t.steered, k);
  }
  return total / static_cast<double>(triples.size());
}

ReductionSummary reduction_summary(std::span<const KLReport> reports) {
  if (reports.empty()) throw InputError("reduction_summary: empty report");
  ReductionSummary summary;
  double total = 0.0;
  for (const auto& r : reports) {
    if (r.samples.empty()) throw InputError("reduction_summary: report " + r.language_pair + " has no samples");
    PairReduction pr;
    pr.language_pair = r.language_pair;
    pr.kl_unsteered = r.mean_unsteered();
    pr.kl_steered = r.mean_steered();
    if (pr.kl_unsteered == 0.0) {
      pr.zero_baseline = true;
      pr.reduction = 0.0;
    } else {
      pr.reduction = (pr.kl_unsteered - pr.kl_steered) / pr.kl_unsteered;
    }
    total += pr.reduction;
    summary.pairs.push_back(pr);
  }
  summary.macro_average = total / static_cast<double>(summary.pairs.size());
  return summary;
}

ReductionSummary reduction_summary(const KLReport& report) { return reduction_summary(std::span(&report, 1)); }

nlohmann::json to_json(const TopKDistribution& dist) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : dist.entries) {
    entries.push_back({{"token_id", e.token_id}, {"token_text", e.token_text}, {"logprob", e.logprob}});
  }
  return {{"sample_id", dist.sample_id},
          {"context_tag", std::string(to_string(dist.context_tag))},
          {"k", dist.entries.size()},
          {"entries", entries}};
}

TopKDistribution distribution_from_json(const nlohmann::json& j) {
  TopKDistribution dist;
  try {
    const auto& sid = j.at("sample_id");
    if (sid.is_string()) {
      dist.sample_id = sid.get<std::string>();
    } else if (sid.is_number_integer()) {
      dist.sample_id = std::to_string(sid.get<std::int64_t>());
    } else {
      throw InputError("sample_id must be a string or integer");
    }
    dist.context_tag = context_tag_from_string(j.at("context_tag").get<std::string>());
    const auto k = j.at("k").get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      dist.entries.push_back(
          {e.at("token_id").get<std::int64_t>(), e.at("token_text").get<std::string>(), e.at("logprob").get<double>()});
    }
    if (k != dist.entries.size()) {
      throw InputError(fmt::format("k = {} but {} entries present", k, dist.entries.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(e.what());
  }
  dist.validate();
  return dist;
}

std::vector<TopKDistribution> read_jsonl(std::istream& in, const std::string& source) {
  std::vector<TopKDistribution> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(distribution_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(fmt::format("{}:{}: malformed JSONL line: {}", source, line_no, e.what()));
    } catch (const InputError& e) {
      throw InputError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
  }
  return out;
}

std::vector<TopKDistribution> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_jsonl(in, path.string());
}

std::string to_jsonl(std::span<const TopKDistribution> dists) {
  std::string out;
  for (const auto& d : dists) out += to_json(d).dump() + "\n";
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const TopKDistribution> dists) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << to_jsonl(dists);
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<DistributionTriple> group_triples(std::span<const TopKDistribution> dists) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const TopKDistribution*>> by_sample;
  for (const auto& d : dists) {
    auto [it, inserted] = by_sample.try_emplace(d.sample_id);
    if (inserted) order.push_back(d.sample_id);
    it->second.push_back(&d);
  }
  std::vector<DistributionTriple> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const TopKDistribution* ref = nullptr;
    DistributionTriple triple;
    for (const auto* d : by_sample[id]) {
      auto duplicate = [&] { return InputError(fmt::format("sample {}: duplicate {} record", id, to_string(d->context_tag))); };
      switch (d->context_tag) {
        case ContextTag::reference_en:
          if (ref) throw duplicate();
          ref = d;
          break;
        case ContextTag::mixed_unsteered:
          if (triple.mixed) throw duplicate();
          triple.mixed = *d;
          break;
        case ContextTag::steered:
          if (triple.steered) throw duplicate();
          triple.steered = *d;
          break;
      }
    }
    if (!ref) throw InputError(fmt::format("sample {}: missing reference_en record", id));
    triple.reference = *ref;
    out.push_back(std::move(triple));
  }
  return out;
}

nlohmann::json to_json(const KLReport& report) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"sample_id", s.sample_id}, {"kl_unsteered", s.kl_unsteered}, {"kl_steered", s.kl_steered}});
  }
  return {{"language_pair", report.language_pair},
          {"strength", report.strength},
          {"top_k", report.top_k},
          {"log_base", "e"},
          {"support_rule", "reference top-k token ids; both sides renormalised; absent candidate tokens floored at 1e-12"},
          {"mean_kl_unsteered", report.mean_unsteered()},
          {"mean_kl_steered", report.mean_steered()},
          {"samples", samples}};
}

std::string kl_report_csv(const KLReport& report) {
  std::string out = "sample_id,kl_unsteered,kl_steered\n";
  for (const auto& s : report.samples) {
    out += fmt::format("{},{:.17g},{:.17g}\n", csv_field(s.sample_id), s.kl_unsteered, s.kl_steered);
  }
  return out;
}

std::string reduction_summary_csv(const ReductionSummary& summary) {
  std::string out = "language_pair,kl_unsteered,kl_steered,change,reduction\n";
  for (const auto& p : summary.pairs) {
    out += fmt::format("{},{:.6f},{:.6f},{:.2f} → {:.2f},{:.4f}{}\n", csv_field(p.language_pair), p.kl_unsteered,
                       p.kl_steered, p.kl_unsteered, p.kl_steered, p.reduction, p.zero_baseline ? " (zero baseline)" : "");
  }
  out += fmt::format("macro_average,,,,{:.4f}\n", summary.macro_average);
  return out;
}

const FamilyEntry* DistributionFamily::find(double strength) const {
  for (const auto& e : entries) {
    if (std::abs(e.strength - strength) <= 1e-6) return &e;
  }
  return nullptr;
}

std::vector<DistributionTriple> DistributionFamily::load(double strength) const {
  const auto* entry = find(strength);
  if (!entry) throw InputError(fmt::format("family {} has no distributions for strength {}", dir.string(), strength));
  const auto dists = read_jsonl(dir / entry->file);
  return group_triples(dists);
}

std::string family_file_name(double strength) { return fmt::format("dists_s{:.6f}.jsonl", strength); }

DistributionFamily read_family(const std::filesystem::path& dir) {
  const auto index = dir / "family.json";
  if (!std::filesystem::exists(index)) throw InputError("family index not found: " + index.string());
  std::ifstream in(index);
  DistributionFamily family;
  family.dir = dir;
  try {
    const auto j = nlohmann::json::parse(in);
    family.language_pair = j.value("language_pair", std::string());
    for (const auto& e : j.at("entries")) {
      family.entries.push_back({e.at("strength").get<double>(), e.at("file").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(index.string() + ": " + e.what());
  }
  return family;
}

void write_family_index(const DistributionFamily& family) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : family.entries) entries.push_back({{"strength", e.strength}, {"file", e.file}});
  const nlohmann::json j{{"language_pair", family.language_pair}, {"entries", entries}};
  std::ofstream out(family.dir / "family.json", std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write family index in " + family.dir.string());
  out << j.dump(2) << "\n";
}

}  // namespace latsteer
