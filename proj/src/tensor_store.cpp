// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <fmt/core.h>

#include "latsteer/error.hpp"
#include "latsteer/hashing.hpp"

namespace fs = std::filesystem;

namespace latsteer::tensor_store {
namespace {

constexpr std::size_t kFixedHeader = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void check_shape(std::span<const std::uint64_t> shape) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw InputError(fmt::format("invalid shape: rank {} outside [1, {}]", shape.size(), kMaxRank));
  }
  for (auto dim : shape) {
    if (dim == 0) throw InputError("invalid shape: zero-length dimension");
  }
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* pooling_name(Pooling p) { return p == Pooling::mean ? "mean" : "last_token"; }

}  // namespace

std::uint64_t element_count(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (auto dim : shape) {
    if (dim != 0 && n > std::numeric_limits<std::uint64_t>::max() / dim) throw InputError("invalid shape: overflow");
    n *= dim;
  }
  return n;
}

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> shape, std::span<const float> data) {
  check_shape(shape);
  const auto count = element_count(shape);
  if (count != data.size()) {
    throw InputError(fmt::format("shape/data length mismatch: shape holds {} values, got {}", count, data.size()));
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kFixedHeader + 8 * shape.size() + 4 * data.size());
  put_u32(out, static_cast<std::uint32_t>(DType::f32));
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto dim : shape) put_u64(out, dim);
  for (float x : data) put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw InputError("bad magic");
  }
  if (bytes.size() < kFixedHeader) throw InputError("truncated header");
  const auto dtype = get_u32(bytes.data() + 8);
  if (dtype != static_cast<std::uint32_t>(DType::f32)) throw InputError(fmt::format("unsupported dtype {}", dtype));
  const auto rank = get_u32(bytes.data() + 12);
  if (rank == 0 || rank > kMaxRank) throw InputError(fmt::format("invalid shape: rank {}", rank));
  if (bytes.size() < kFixedHeader + 8 * rank) throw InputError("truncated header");

  Tensor t;
  t.shape.resize(rank);
  for (std::uint32_t i = 0; i < rank; ++i) t.shape[i] = get_u64(bytes.data() + kFixedHeader + 8 * i);
  check_shape(t.shape);
  const auto count = element_count(t.shape);
  const std::size_t offset = kFixedHeader + 8 * rank;
  const std::size_t available = bytes.size() - offset;
  if (count > available / 4) {
    throw InputError(fmt::format("truncated payload: header claims {} floats, file holds {}", count, available / 4));
  }
  if (available != count * 4) {
    throw InputError(fmt::format("trailing bytes after payload: expected {}, found {}", count * 4, available));
  }
  t.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
  return t;
}

void write_tensor(const fs::path& path, std::span<const std::uint64_t> shape, std::span<const float> data) {
  const auto bytes = encode_tensor(shape, data);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Tensor read_tensor(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("tensor file not found: " + path.string());
  const auto bytes = read_all(path);
  try {
    return decode_tensor(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void CorpusManifest::validate() const {
  if (languages.size() < 2) throw InputError("manifest: need at least two languages");
  std::set<std::string> seen;
  for (const auto& lang : languages) {
    if (lang.empty()) throw InputError("manifest: empty language code");
    if (!seen.insert(lang).second) throw InputError("manifest: duplicate language '" + lang + "'");
  }
  if (samples_per_language < 2) throw InputError("manifest: samples_per_language must be >= 2");
  if (hidden_dim < 2) throw InputError("manifest: hidden_dim must be >= 2");
  if (layers < 1) throw InputError("manifest: layers must be >= 1");
}

nlohmann::json to_json(const CorpusManifest& m) {
  return nlohmann::json{{"languages", m.languages},
                        {"samples_per_language", m.samples_per_language},
                        {"layers", m.layers},
                        {"hidden_dim", m.hidden_dim},
                        {"pooling", pooling_name(m.pooling)},
                        {"source", m.source}};
}

CorpusManifest manifest_from_json(const nlohmann::json& j) {
  CorpusManifest m;
  try {
    m.languages = j.at("languages").get<std::vector<std::string>>();
    m.samples_per_language = j.at("samples_per_language").get<std::size_t>();
    m.layers = j.at("layers").get<std::size_t>();
    m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    const auto pooling = j.value("pooling", std::string("mean"));
    if (pooling == "mean") {
      m.pooling = Pooling::mean;
    } else if (pooling == "last_token") {
      m.pooling = Pooling::last_token;
    } else {
      throw InputError("manifest: unknown pooling '" + pooling + "'");
    }
    m.source = j.value("source", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

std::vector<std::string> canonical_labels(const CorpusManifest& manifest) {
  std::vector<std::string> labels;
  labels.reserve(manifest.total_rows());
  for (const auto& lang : manifest.languages) labels.insert(labels.end(), manifest.samples_per_language, lang);
  return labels;
}

fs::path layer_path(const fs::path& dir, std::size_t layer) { return dir / fmt::format("layer_{}.lstens", layer); }

void write_dump(const fs::path& dir, const CorpusManifest& manifest, std::span<const ActivationMatrix> layers) {
  manifest.validate();
  if (layers.size() != manifest.layers) {
    throw InputError(fmt::format("dump: manifest says {} layers, got {}", manifest.layers, layers.size()));
  }
  const auto labels = canonical_labels(manifest);
  for (const auto& layer : layers) {
    if (layer.rows.rows != manifest.total_rows() || layer.rows.cols != manifest.hidden_dim) {
      throw InputError(fmt::format("dump: layer {} has shape [{}, {}], expected [{}, {}]", layer.layer_index,
                                   layer.rows.rows, layer.rows.cols, manifest.total_rows(), manifest.hidden_dim));
    }
    if (layer.labels != labels) throw InputError("dump: row labels are not grouped in manifest order");
  }
  fs::create_directories(dir);
  write_json_file(dir / "manifest.json", to_json(manifest));
  write_json_file(dir / "labels.json", nlohmann::json(labels));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& m = layers[i].rows;
    std::vector<float> payload(m.data.size());
    std::transform(m.data.begin(), m.data.end(), payload.begin(), [](double x) { return static_cast<float>(x); });
    const std::uint64_t shape[2] = {m.rows, m.cols};
    write_tensor(layer_path(dir, i), shape, payload);
  }
}

DumpReader::DumpReader(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) throw InputError("dump not found: " + dir_.string());
  const auto manifest_file = dir_ / "manifest.json";
  if (!fs::exists(manifest_file)) throw InputError("dump not found: missing " + manifest_file.string());
  manifest_ = manifest_from_json(read_json_file(manifest_file));
  manifest_sha256_ = sha256_file(manifest_file);
  const auto labels_file = dir_ / "labels.json";
  if (!fs::exists(labels_file)) throw InputError("dump: missing " + labels_file.string());
  try {
    labels_ = read_json_file(labels_file).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("labels.json: ") + e.what());
  }
  if (labels_ != canonical_labels(manifest_)) {
    throw InputError("labels.json does not match manifest language grouping");
  }
}

ActivationMatrix DumpReader::load_layer(std::size_t layer) const {
  if (layer >= manifest_.layers) {
    throw InputError(fmt::format("layer {} out of range (dump has {})", layer, manifest_.layers));
  }
  const auto t = read_tensor(layer_path(dir_, layer));
  if (t.shape.size() != 2 || t.shape[0] != manifest_.total_rows() || t.shape[1] != manifest_.hidden_dim) {
    throw InputError(fmt::format("layer {}: tensor shape does not match manifest [{}, {}]", layer,
                                 manifest_.total_rows(), manifest_.hidden_dim));
  }
  ActivationMatrix acts;
  acts.layer_index = static_cast<int>(layer);
  acts.rows = Matrix(t.shape[0], t.shape[1]);
  std::copy(t.data.begin(), t.data.end(), acts.rows.data.begin());
  acts.labels = labels_;
  acts.languages = manifest_.languages;
  return acts;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace latsteer::tensor_store
