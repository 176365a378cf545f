// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats shared with the extractor.
//
// TensorFile (.lstens), all integers little-endian:
//   offset 0   8 bytes   magic "LSTENS01"
//   offset 8   u32       dtype (0 = f32)
//   offset 12  u32       rank (1..4)
//   offset 16  u64[rank] shape, row-major, every entry >= 1
//   then       f32[prod(shape)] payload
//
// Activation dump directory:
//   manifest.json        CorpusManifest
//   labels.json          JSON array, language code of every row
//   layer_{i}.lstens     [N_total, d] per layer, rows grouped by language in
//                        manifest order, samples in the same order per language

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latsteer/activation.hpp"

namespace latsteer::tensor_store {

inline constexpr char kMagic[8] = {'L', 'S', 'T', 'E', 'N', 'S', '0', '1'};
inline constexpr std::uint32_t kMaxRank = 4;

enum class DType : std::uint32_t { f32 = 0 };

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  bool operator==(const Tensor&) const = default;
};

std::uint64_t element_count(std::span<const std::uint64_t> shape);

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint64_t> shape, std::span<const float> data);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

// Validates shape and length before touching the filesystem.
void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> shape, std::span<const float> data);
Tensor read_tensor(const std::filesystem::path& path);

enum class Pooling { mean, last_token };

struct CorpusManifest {
  std::vector<std::string> languages;
  std::size_t samples_per_language = 0;
  std::size_t layers = 0;
  std::size_t hidden_dim = 0;
  Pooling pooling = Pooling::mean;
  std::string source;

  void validate() const;
  std::size_t total_rows() const { return languages.size() * samples_per_language; }
};

nlohmann::json to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j);

// Labels in the canonical grouped order implied by the manifest.
std::vector<std::string> canonical_labels(const CorpusManifest& manifest);

std::filesystem::path layer_path(const std::filesystem::path& dir, std::size_t layer);

// Writes manifest.json, labels.json and one tensor per layer (f32 cast).
void write_dump(const std::filesystem::path& dir, const CorpusManifest& manifest,
                std::span<const ActivationMatrix> layers);

// Lazily loads one layer at a time from a dump directory.
class DumpReader {
 public:
  explicit DumpReader(std::filesystem::path dir);

  const CorpusManifest& manifest() const { return manifest_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t num_layers() const { return manifest_.layers; }
  // SHA-256 of the manifest.json bytes.
  const std::string& manifest_sha256() const { return manifest_sha256_; }

  ActivationMatrix load_layer(std::size_t layer) const;

 private:
  std::filesystem::path dir_;
  CorpusManifest manifest_;
  std::vector<std::string> labels_;
  std::string manifest_sha256_;
};

// JSON text helpers; write_json_file emits dump(2) plus a trailing newline.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace latsteer::tensor_store
