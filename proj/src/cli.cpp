// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "latsteer/direction_finder.hpp"
#include "latsteer/divergence.hpp"
#include "latsteer/error.hpp"
#include "latsteer/hashing.hpp"
#include "latsteer/log.hpp"
#include "latsteer/probe.hpp"
#include "latsteer/steerer.hpp"
#include "latsteer/synth_oracle.hpp"
#include "latsteer/tensor_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace latsteer::cli {
namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json hash_dump(const tensor_store::DumpReader& dump) {
  json files = json::object();
  files["manifest.json"] = dump.manifest_sha256();
  files["labels.json"] = sha256_file(dump.dir() / "labels.json");
  for (std::size_t i = 0; i < dump.num_layers(); ++i) {
    const auto p = tensor_store::layer_path(dump.dir(), i);
    files[p.filename().string()] = sha256_file(p);
  }
  return {{"path", dump.dir().string()}, {"sha256", files}};
}

void write_run_meta(const fs::path& out_dir, const std::string& subcommand, const json& config, const json& inputs) {
  const json meta{{"tool", "latsteer"},
                  {"subcommand", subcommand},
                  {"config", config},
                  {"inputs", inputs},
                  {"created_utc", utc_now()}};
  tensor_store::write_json_file(out_dir / "run_meta.json", meta);
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir.string());
}

std::string variance_csv(const std::vector<int>& layers, const std::vector<const DirectionLayer*>& fits, std::size_t k) {
  std::string out = "layer";
  for (std::size_t j = 0; j < k; ++j) out += fmt::format(",pc{}_ratio", j + 1);
  out += "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out += fmt::format("{}", layers[i]);
    for (std::size_t j = 0; j < k; ++j) out += fmt::format(",{:.12g}", fits[i]->explained_variance_ratio[j]);
    out += "\n";
  }
  return out;
}

std::string variance_csv(const DirectionSet& set) {
  std::vector<int> layers;
  std::vector<const DirectionLayer*> fits;
  for (const auto& [idx, layer] : set.layers) {
    layers.push_back(idx);
    fits.push_back(&layer);
  }
  return variance_csv(layers, fits, set.k());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------- fit-directions

struct FitOptions {
  std::string dump;
  std::string out;
  std::size_t k = 3;
  std::optional<int> layer_threshold;
  double strength = 1.0;
  unsigned threads = 1;
};

int cmd_fit_directions(const FitOptions& o, std::ostream& out) {
  const tensor_store::DumpReader dump(o.dump);
  const int num_layers = static_cast<int>(dump.num_layers());
  SteeringConfig steering;
  steering.strength = o.strength;
  steering.layer_threshold = o.layer_threshold.value_or(default_layer_threshold(num_layers));
  steering.validate(num_layers, o.k);
  ensure_out_dir(o.out);

  DirectionSet set;
  set.languages = dump.manifest().languages;
  set.manifest_sha256 = dump.manifest_sha256();
  // Layers are streamed in batches of `threads` so at most that many are resident.
  const std::size_t batch = std::max(1u, o.threads);
  for (std::size_t start = 0; start < dump.num_layers(); start += batch) {
    std::vector<ActivationMatrix> layers;
    for (std::size_t i = start; i < std::min(dump.num_layers(), start + batch); ++i) layers.push_back(dump.load_layer(i));
    std::vector<DirectionLayer> fits(layers.size());
    if (layers.size() == 1) {
      fits[0] = fit_directions(layers[0], o.k);
    } else {
      std::vector<std::future<DirectionLayer>> pending;
      for (const auto& l : layers) pending.push_back(std::async(std::launch::async, [&l, &o] { return fit_directions(l, o.k); }));
      for (std::size_t i = 0; i < pending.size(); ++i) fits[i] = pending[i].get();
    }
    for (auto& f : fits) {
      log::info("layer {}: pc1 ratio {:.4f}", f.layer_index, f.explained_variance_ratio[0]);
      set.layers.emplace(f.layer_index, std::move(f));
    }
  }

  const json steering_json{{"strength", steering.strength},
                           {"layer_threshold", steering.layer_threshold},
                           {"component_index", steering.component_index}};
  save_directions(o.out, set, json{{"steering", steering_json}, {"num_layers", num_layers}});
  tensor_store::write_text_file(fs::path(o.out) / "explained_variance.csv", variance_csv(set));
  write_run_meta(o.out, "fit-directions",
                 {{"dump", o.dump}, {"out", o.out}, {"k", o.k}, {"layer_threshold", steering.layer_threshold},
                  {"strength", o.strength}, {"threads", o.threads}},
                 {{"dump", hash_dump(dump)}});
  out << fmt::format("fitted {} layers (k = {}) -> {}\n", set.layers.size(), o.k, o.out);
  return kExitOk;
}

// ---------------------------------------------------------------- plot-data

struct PlotOptions {
  std::string directions;
  std::string dump;
  std::string out;
  std::string layers;
};

int cmd_plot_data(const PlotOptions& o, std::ostream& out) {
  const auto set = load_directions(o.directions);
  const tensor_store::DumpReader dump(o.dump);
  if (set.manifest_sha256 != dump.manifest_sha256()) {
    throw InputError(fmt::format("manifest hash mismatch: directions were fit on {}, dump manifest is {} (stale directions)",
                                 set.manifest_sha256, dump.manifest_sha256()));
  }
  const int last = static_cast<int>(dump.num_layers()) - 1;
  std::vector<int> requested;
  if (o.layers.empty()) {
    requested = {0, last / 2, last};
    requested.erase(std::unique(requested.begin(), requested.end()), requested.end());
  } else {
    for (const auto& item : split_list(o.layers)) {
      try {
        const int layer = item == "last" ? last : std::stoi(item);
        requested.push_back(layer);
      } catch (const std::logic_error&) {
        throw InputError("--layers expects comma-separated layer indices, got '" + item + "'");
      }
    }
  }
  ensure_out_dir(o.out);

  const std::size_t n_pc = std::min<std::size_t>(2, set.k());
  for (int layer : requested) {
    if (layer < 0 || layer > last) throw InputError(fmt::format("layer {} outside dump range", layer));
    const auto acts = dump.load_layer(static_cast<std::size_t>(layer));
    const auto proj = project(acts, set.at(layer), n_pc);
    std::string csv = n_pc == 2 ? "sample_index,language,pc1,pc2\n" : "sample_index,language,pc1\n";
    const std::size_t per_lang = dump.manifest().samples_per_language;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      csv += fmt::format("{},{},{:.9g}", i % per_lang, acts.labels[i], proj(i, 0));
      if (n_pc == 2) csv += fmt::format(",{:.9g}", proj(i, 1));
      csv += "\n";
    }
    tensor_store::write_text_file(fs::path(o.out) / fmt::format("scatter_layer_{}.csv", layer), csv);
  }

  if (static_cast<int>(set.layers.size()) != last + 1) {
    log::warn("directions cover {} of {} layers; variance curve is partial", set.layers.size(), last + 1);
  }
  tensor_store::write_text_file(fs::path(o.out) / "explained_variance.csv", variance_csv(set));

  std::string sep = "layer,pc1_separation\n";
  for (const auto& [idx, layer] : set.layers) {
    const auto acts = dump.load_layer(static_cast<std::size_t>(idx));
    const auto proj = project(acts, layer, 1);
    sep += fmt::format("{},{:.9g}\n", idx, cluster_separation(proj.data, acts.labels));
  }
  tensor_store::write_text_file(fs::path(o.out) / "separation.csv", sep);

  write_run_meta(o.out, "plot-data", {{"directions", o.directions}, {"dump", o.dump}, {"out", o.out}, {"layers", requested}},
                 {{"dump", hash_dump(dump)}, {"directions_json", sha256_file(fs::path(o.directions) / "directions.json")}});
  out << fmt::format("wrote {} scatter file(s) and variance curves -> {}\n", requested.size(), o.out);
  return kExitOk;
}

// ---------------------------------------------------------------- classify

struct ClassifyOptions {
  std::string dump;
  std::string directions;
  std::string out;
  std::size_t fit = 50;
  std::size_t val = 100;
  std::optional<int> layer;
  std::string base_language;
  std::string pairs;
};

std::vector<std::size_t> split_rows(const tensor_store::CorpusManifest& m, std::span<const std::string> langs,
                                    std::size_t begin, std::size_t count) {
  std::vector<std::size_t> rows;
  for (const auto& lang : langs) {
    const auto li = static_cast<std::size_t>(std::find(m.languages.begin(), m.languages.end(), lang) - m.languages.begin());
    for (std::size_t s = begin; s < begin + count; ++s) rows.push_back(li * m.samples_per_language + s);
  }
  return rows;
}

struct PairResult {
  std::string name;
  ProjectionProbe probe;
  ProbeEvaluation eval;
};

PairResult classify_languages(const ActivationMatrix& layer, const tensor_store::CorpusManifest& m,
                              std::span<const std::string> langs, std::size_t n_fit, std::size_t n_val,
                              const DirectionLayer* fixed) {
  const auto fit_rows = split_rows(m, langs, 0, n_fit);
  const auto val_rows = split_rows(m, langs, n_fit, n_val);
  const auto fit_acts = layer.select(fit_rows);
  const auto val_acts = layer.select(val_rows);
  const DirectionLayer dirs = fixed ? *fixed : fit_directions(fit_acts, 1);
  const auto z_fit = project(fit_acts, dirs, 1);
  const auto z_val = project(val_acts, dirs, 1);
  PairResult r;
  std::string name;
  for (const auto& l : langs) name += (name.empty() ? "" : "-") + l;
  r.name = langs.size() == m.languages.size() && langs.size() > 2 ? "all" : name;
  r.probe = train_probe(z_fit.data, fit_acts.labels, langs);
  r.probe.layer_index = layer.layer_index;
  r.probe.component_index = 0;
  r.eval = evaluate_probe(r.probe, z_val.data, val_acts.labels);
  return r;
}

int cmd_classify(const ClassifyOptions& o, std::ostream& out) {
  const tensor_store::DumpReader dump(o.dump);
  const auto& m = dump.manifest();
  if (o.fit < 2 || o.val < 1) throw InputError("classify: need --fit >= 2 and --val >= 1");
  if (o.fit + o.val > m.samples_per_language) {
    throw InputError(fmt::format("insufficient samples: split {} + {} exceeds {} per language", o.fit, o.val,
                                 m.samples_per_language));
  }
  const int layer_index = o.layer.value_or(static_cast<int>(m.layers) - 1);
  if (layer_index < 0 || layer_index >= static_cast<int>(m.layers)) throw InputError("classify: --layer out of range");
  const std::string base = o.base_language.empty() ? m.languages.front() : o.base_language;
  auto known = [&](const std::string& l) { return std::find(m.languages.begin(), m.languages.end(), l) != m.languages.end(); };
  if (!known(base)) throw InputError("classify: unknown base language '" + base + "'");

  std::vector<std::vector<std::string>> pairs;
  if (!o.pairs.empty()) {
    for (const auto& item : split_list(o.pairs)) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) throw InputError("classify: pairs look like en-zh, got '" + item + "'");
      std::vector<std::string> p{item.substr(0, dash), item.substr(dash + 1)};
      if (!known(p[0]) || !known(p[1]) || p[0] == p[1]) throw InputError("classify: bad pair '" + item + "'");
      pairs.push_back(p);
    }
  } else {
    for (const auto& l : m.languages) {
      if (l != base) pairs.push_back({base, l});
    }
  }

  std::optional<DirectionSet> fixed;
  if (!o.directions.empty()) {
    fixed = load_directions(o.directions);
    if (fixed->manifest_sha256 != dump.manifest_sha256()) throw InputError("manifest hash mismatch: directions do not belong to this dump");
    if (!fixed->has_layer(layer_index)) throw InputError(fmt::format("directions have no layer {}", layer_index));
  }
  ensure_out_dir(o.out);
  const auto layer = dump.load_layer(static_cast<std::size_t>(layer_index));

  std::vector<PairResult> results;
  for (const auto& p : pairs) results.push_back(classify_languages(layer, m, p, o.fit, o.val, nullptr));
  if (m.languages.size() > 2) {
    results.push_back(classify_languages(layer, m, m.languages, o.fit, o.val, fixed ? &fixed->at(layer_index) : nullptr));
  }

  std::string csv = "language_pair,accuracy,n_fit,n_val\n";
  json probes = json::array();
  for (const auto& r : results) {
    csv += fmt::format("{},{:.4f},{},{}\n", r.name, r.eval.accuracy, o.fit * r.probe.languages.size(),
                       o.val * r.probe.languages.size());
    probes.push_back({{"language_pair", r.name}, {"probe", to_json(r.probe)}, {"validation", to_json(r.eval)}});
    out << fmt::format("{:<12} {:.4f}\n", r.name, r.eval.accuracy);
  }
  tensor_store::write_text_file(fs::path(o.out) / "accuracy.csv", csv);
  tensor_store::write_json_file(fs::path(o.out) / "probes.json", probes);
  json inputs{{"dump", hash_dump(dump)}};
  if (fixed) inputs["directions_json"] = sha256_file(fs::path(o.directions) / "directions.json");
  write_run_meta(o.out, "classify",
                 {{"dump", o.dump}, {"directions", o.directions}, {"out", o.out}, {"fit", o.fit}, {"val", o.val},
                  {"layer", layer_index}, {"base_language", base}},
                 inputs);
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate-kl

struct EvalOptions {
  std::vector<std::string> dists;
  std::string reference;
  std::string candidate;
  std::string out;
  std::size_t top_k = kDefaultTopK;
  std::string pair = "unknown";
  double strength = 0.0;
  std::size_t token_table = 0;
};

void write_kl_outputs(const fs::path& dir, const KLReport& report) {
  tensor_store::write_json_file(dir / "kl_report.json", to_json(report));
  tensor_store::write_text_file(dir / "kl_report.csv", kl_report_csv(report));
  tensor_store::write_text_file(dir / "summary.csv", reduction_summary_csv(reduction_summary(report)));
}

int cmd_evaluate_kl(const EvalOptions& o, std::ostream& out) {
  const bool paired = !o.reference.empty() || !o.candidate.empty();
  if (paired == !o.dists.empty()) throw InputError("evaluate-kl: pass either --dists or --reference with --candidate");
  ensure_out_dir(o.out);
  json inputs = json::object();

  if (paired) {
    if (o.reference.empty() || o.candidate.empty()) throw InputError("evaluate-kl: --reference and --candidate go together");
    const auto ref = read_jsonl(fs::path(o.reference));
    const auto cand = read_jsonl(fs::path(o.candidate));
    std::map<std::string, const TopKDistribution*> by_id;
    for (const auto& c : cand) {
      if (!by_id.emplace(c.sample_id, &c).second) throw InputError("candidate: duplicate sample_id " + c.sample_id);
    }
    std::string csv = "sample_id,kl\n";
    double total = 0.0;
    for (const auto& r : ref) {
      auto it = by_id.find(r.sample_id);
      if (it == by_id.end()) throw InputError("candidate file lacks sample " + r.sample_id);
      const double kl = kl_topk(r, *it->second, o.top_k);
      total += kl;
      csv += fmt::format("{},{:.17g}\n", r.sample_id, kl);
    }
    if (ref.empty()) throw InputError("evaluate-kl: reference file is empty");
    const double mean = total / static_cast<double>(ref.size());
    tensor_store::write_text_file(fs::path(o.out) / "kl_pairs.csv", csv);
    tensor_store::write_json_file(fs::path(o.out) / "kl_pairs.json",
                                  {{"top_k", o.top_k}, {"samples", ref.size()}, {"mean_kl", mean}, {"log_base", "e"}});
    inputs["reference"] = sha256_file(o.reference);
    inputs["candidate"] = sha256_file(o.candidate);
    out << fmt::format("mean KL over {} samples: {:.6f}\n", ref.size(), mean);
  } else {
    std::vector<TopKDistribution> all;
    for (const auto& f : o.dists) {
      auto part = read_jsonl(fs::path(f));
      all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      inputs[f] = sha256_file(f);
    }
    const auto triples = group_triples(all);
    const auto report = build_kl_report(triples, o.top_k, o.pair, o.strength);
    write_kl_outputs(o.out, report);
    if (o.token_table > 0) {
      const auto& t = triples.front();
      const auto table = token_shift_table(t.reference, *t.mixed, *t.steered, o.token_table);
      tensor_store::write_text_file(fs::path(o.out) / "token_shift.csv", token_shift_csv(table));
    }
    out << fmt::format("{}: {:.2f} → {:.2f}\n", report.language_pair, report.mean_unsteered(), report.mean_steered());
  }
  write_run_meta(o.out, "evaluate-kl",
                 {{"dists", o.dists}, {"reference", o.reference}, {"candidate", o.candidate}, {"out", o.out},
                  {"top_k", o.top_k}, {"pair", o.pair}, {"strength", o.strength}, {"token_table", o.token_table}},
                 inputs);
  return kExitOk;
}

// ---------------------------------------------------------------- grid-search

struct GridOptions {
  std::string family;
  std::string grid = "-4:4:0.1";
  std::string out;
  std::size_t top_k = kDefaultTopK;
  bool parallel = false;
};

int cmd_grid_search(const GridOptions& o, std::ostream& out) {
  const auto grid = StrengthGrid::parse(o.grid);
  const auto family = read_family(o.family);
  for (double s : grid.points()) {
    if (!family.find(s)) throw InputError(fmt::format("family {} has no distributions for grid strength {}", o.family, s));
  }
  ensure_out_dir(o.out);
  const auto objective = [&](double s) { return mean_steered_kl(family.load(s), o.top_k); };
  const auto result =
      grid_search_strength(objective, grid, o.parallel ? GridEvaluation::parallel_pure : GridEvaluation::sequential);
  tensor_store::write_text_file(fs::path(o.out) / "grid_curve.csv", curve_csv(result));
  const std::string pair = family.language_pair.empty() ? "unknown" : family.language_pair;
  tensor_store::write_text_file(fs::path(o.out) / "best_strength.csv",
                                fmt::format("language_pair,best_strength,mean_kl\n{},{:.6g},{:.17g}\n", pair,
                                            result.best_strength, result.best_score));
  const auto report = build_kl_report(family.load(result.best_strength), o.top_k, pair, result.best_strength);
  write_kl_outputs(o.out, report);

  json inputs{{"family_json", sha256_file(fs::path(o.family) / "family.json")}};
  for (const auto& e : family.entries) inputs[e.file] = sha256_file(fs::path(o.family) / e.file);
  write_run_meta(o.out, "grid-search",
                 {{"family", o.family}, {"grid", o.grid}, {"out", o.out}, {"top_k", o.top_k}, {"parallel", o.parallel}},
                 inputs);
  out << fmt::format("{}: best strength {:.6g} (mean KL {:.6f})\n", pair, result.best_strength, result.best_score);
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n = 50;
  std::size_t d = 64;
  int layers = 8;
  std::optional<int> crit_layer;
  double noise = 0.1;
  bool family = false;
  double s_star = -1.5;
  std::string grid = "-4:4:0.1";
  std::string pair = "en-es";
  std::size_t samples = 16;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  auto spec = synth::SynthSpec::defaults(o.seed);
  spec.d = o.d;
  spec.layers = o.layers;
  spec.crit_layer = o.crit_layer.value_or(default_layer_threshold(o.layers));
  spec.noise_std = o.noise;
  spec.validate();
  ensure_out_dir(o.out);

  const json config{{"out", o.out}, {"seed", o.seed}, {"n", o.n}, {"d", o.d}, {"layers", o.layers},
                    {"crit_layer", spec.crit_layer}, {"noise", o.noise}, {"family", o.family},
                    {"s_star", o.s_star}, {"grid", o.grid}, {"pair", o.pair}, {"samples", o.samples}};
  if (o.family) {
    synth::FamilyOptions fo;
    fo.samples = o.samples;
    const auto make = synth::generate_nexttoken_family(spec, o.s_star, fo);
    DistributionFamily family;
    family.dir = o.out;
    family.language_pair = o.pair;
    for (double s : StrengthGrid::parse(o.grid).points()) {
      std::vector<TopKDistribution> records;
      for (auto& t : make(s)) {
        records.push_back(std::move(t.reference));
        records.push_back(std::move(*t.mixed));
        records.push_back(std::move(*t.steered));
      }
      const auto file = family_file_name(s);
      write_jsonl(fs::path(o.out) / file, records);
      family.entries.push_back({s, file});
    }
    write_family_index(family);
    out << fmt::format("wrote next-token family ({} strengths, s* = {}) -> {}\n", family.entries.size(), o.s_star, o.out);
  } else {
    const auto dump = synth::generate_dump(spec, o.n);
    synth::write_dump(o.out, dump);
    out << fmt::format("wrote synthetic dump ({} layers, {} rows) -> {}\n", spec.layers, dump.manifest.total_rows(), o.out);
  }
  write_run_meta(o.out, "synth", config, json::object());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"latsteer: language directions, steering and divergence evaluation for multilingual LLM hidden states", "latsteer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit-directions", "Fit per-layer principal directions of a dump");
  fit_cmd->add_option("--dump", fit.dump, "Activation dump directory")->required();
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  fit_cmd->add_option("--k", fit.k, "Components per layer")->capture_default_str();
  fit_cmd->add_option("--layer-threshold", fit.layer_threshold, "First steered layer recorded for the extractor");
  fit_cmd->add_option("--strength", fit.strength, "Steering strength recorded for the extractor")->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "Layers fitted concurrently")->capture_default_str();

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot-data", "Emit language-map scatter and variance-curve CSVs");
  plot_cmd->add_option("--directions", plot.directions, "Directions directory")->required();
  plot_cmd->add_option("--dump", plot.dump, "Activation dump directory")->required();
  plot_cmd->add_option("--out", plot.out, "Output directory")->required();
  plot_cmd->add_option("--layers", plot.layers, "Comma-separated layers for scatter files (default first,mid,last)");

  ClassifyOptions cls;
  auto* cls_cmd = app.add_subcommand("classify", "Train and validate PC1 language probes per language pair");
  cls_cmd->add_option("--dump", cls.dump, "Activation dump directory")->required();
  cls_cmd->add_option("--out", cls.out, "Output directory")->required();
  cls_cmd->add_option("--directions", cls.directions, "Directions for the all-language probe (default: fit on the fit split)");
  cls_cmd->add_option("--fit", cls.fit, "Samples per language for fitting")->capture_default_str();
  cls_cmd->add_option("--val", cls.val, "Samples per language for validation")->capture_default_str();
  cls_cmd->add_option("--layer", cls.layer, "Layer to probe (default last)");
  cls_cmd->add_option("--base-language", cls.base_language, "Language paired with every other (default first)");
  cls_cmd->add_option("--pairs", cls.pairs, "Explicit pairs, e.g. en-zh,en-es");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("evaluate-kl", "Top-k KL divergence between next-token distributions");
  ev_cmd->add_option("--dists", ev.dists, "JSONL files with reference/mixed/steered records");
  ev_cmd->add_option("--reference", ev.reference, "JSONL reference distributions (paired mode)");
  ev_cmd->add_option("--candidate", ev.candidate, "JSONL candidate distributions (paired mode)");
  ev_cmd->add_option("--out", ev.out, "Output directory")->required();
  ev_cmd->add_option("--top-k", ev.top_k, "Reference support size")->capture_default_str();
  ev_cmd->add_option("--pair", ev.pair, "Language pair label");
  ev_cmd->add_option("--strength", ev.strength, "Strength the steered records were produced with");
  ev_cmd->add_option("--token-table", ev.token_table, "Write a top-N token shift table for the first sample");

  GridOptions gs;
  auto* gs_cmd = app.add_subcommand("grid-search", "Search the steering strength minimising mean steered KL");
  gs_cmd->add_option("--family", gs.family, "Distribution family directory")->required();
  gs_cmd->add_option("--grid", gs.grid, "lo:hi:step")->capture_default_str();
  gs_cmd->add_option("--out", gs.out, "Output directory")->required();
  gs_cmd->add_option("--top-k", gs.top_k, "Reference support size")->capture_default_str();
  gs_cmd->add_flag("--parallel", gs.parallel, "Evaluate grid points concurrently");

  SynthOptions sy;
  auto* sy_cmd = app.add_subcommand("synth", "Generate a synthetic dump or next-token family");
  sy_cmd->add_option("--out", sy.out, "Output directory")->required();
  sy_cmd->add_option("--seed", sy.seed)->capture_default_str();
  sy_cmd->add_option("--n", sy.n, "Samples per language")->capture_default_str();
  sy_cmd->add_option("--d", sy.d, "Hidden size")->capture_default_str();
  sy_cmd->add_option("--layers", sy.layers)->capture_default_str();
  sy_cmd->add_option("--crit-layer", sy.crit_layer, "First layer carrying language offsets");
  sy_cmd->add_option("--noise", sy.noise)->capture_default_str();
  sy_cmd->add_flag("--family", sy.family, "Write a next-token distribution family instead of a dump");
  sy_cmd->add_option("--s-star", sy.s_star, "Planted optimal strength for --family")->capture_default_str();
  sy_cmd->add_option("--grid", sy.grid, "Strengths written for --family")->capture_default_str();
  sy_cmd->add_option("--pair", sy.pair)->capture_default_str();
  sy_cmd->add_option("--samples", sy.samples, "Samples in the family")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }

  try {
    if (*fit_cmd) return cmd_fit_directions(fit, out);
    if (*plot_cmd) return cmd_plot_data(plot, out);
    if (*cls_cmd) return cmd_classify(cls, out);
    if (*ev_cmd) return cmd_evaluate_kl(ev, out);
    if (*gs_cmd) return cmd_grid_search(gs, out);
    if (*sy_cmd) return cmd_synth(sy, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ComputeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitComputeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitComputeError;
  }
  return kExitInputError;
}

}  // namespace latsteer::cli
