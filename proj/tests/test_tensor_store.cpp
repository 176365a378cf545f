// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "latsteer/error.hpp"
#include "latsteer/hashing.hpp"
#include "latsteer/tensor_store.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace latsteer;
using namespace latsteer::tensor_store;

namespace {

const fs::path kData = LATSTEER_TEST_DATA;

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<float> random_payload(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> out(n);
  for (auto& x : out) x = static_cast<float>(static_cast<double>(rng() >> 40) * 0x1.0p-24 * 2.0 - 1.0);
  return out;
}

}  // namespace

TEST_CASE("write_tensor: 2x2 identity round-trips bit-exactly") {
  testutil::TempDir tmp;
  const std::uint64_t shape[] = {2, 2};
  const float data[] = {1, 0, 0, 1};
  write_tensor(tmp.path() / "eye.lstens", shape, data);
  const auto t = read_tensor(tmp.path() / "eye.lstens");
  CHECK(t.shape == std::vector<std::uint64_t>{2, 2});
  CHECK(t.data == std::vector<float>{1, 0, 0, 1});
}

TEST_CASE("write_tensor: zero-length dimension is rejected before writing") {
  testutil::TempDir tmp;
  const std::uint64_t shape[] = {0, 3};
  const auto path = tmp.path() / "bad.lstens";
  CHECK_THROWS_WITH_AS(write_tensor(path, shape, std::span<const float>{}), doctest::Contains("invalid shape"), InputError);
  CHECK_FALSE(fs::exists(path));
}

TEST_CASE("write_tensor: shape/data mismatch is rejected before writing") {
  testutil::TempDir tmp;
  const std::uint64_t shape[] = {2, 2};
  const float data[] = {1, 2, 3};
  const auto path = tmp.path() / "bad.lstens";
  CHECK_THROWS_AS(write_tensor(path, shape, data), InputError);
  CHECK_FALSE(fs::exists(path));
}

TEST_CASE("write_tensor: rank above 4 is rejected") {
  const std::uint64_t shape[] = {1, 1, 1, 1, 1};
  const float data[] = {1};
  CHECK_THROWS_WITH_AS(encode_tensor(shape, data), doctest::Contains("invalid shape"), InputError);
}

TEST_CASE("write_tensor: 50x1536 random payload hashes identically across writes") {
  testutil::TempDir tmp;
  const std::uint64_t shape[] = {50, 1536};
  const auto payload = random_payload(50 * 1536, 42);
  write_tensor(tmp.path() / "a.lstens", shape, payload);
  write_tensor(tmp.path() / "b.lstens", shape, payload);
  const auto ha = sha256_file(tmp.path() / "a.lstens");
  CHECK(ha == sha256_file(tmp.path() / "b.lstens"));
  // Pinned; reproduced independently by a Python MT19937-64 + struct + hashlib script.
  CHECK(ha == "c26fde0790e4c660dc9884c955969e91fb5a366b992714f62aa3770381e79e56");
}

TEST_CASE("read_tensor: golden file parses byte-exactly") {
  const auto bytes = slurp(kData / "golden_2x3.lstens");
  REQUIRE(bytes.size() == 56);
  const auto t = decode_tensor(bytes);
  CHECK(t.shape == std::vector<std::uint64_t>{2, 3});
  const std::vector<float> expected{1.0f, -2.5f, 0.0f, 3.25f, 0.1f, -1e30f};
  REQUIRE(t.data.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(t.data[i]) == std::bit_cast<std::uint32_t>(expected[i]));
  }
  CHECK(encode_tensor(t.shape, t.data) == bytes);
}

TEST_CASE("read_tensor: corrupt fixtures are rejected") {
  CHECK_THROWS_WITH_AS(read_tensor(kData / "bad_magic.lstens"), doctest::Contains("bad magic"), InputError);
  CHECK_THROWS_WITH_AS(read_tensor(kData / "truncated.lstens"), doctest::Contains("truncated"), InputError);
  CHECK_THROWS_WITH_AS(read_tensor(kData / "bad_dtype.lstens"), doctest::Contains("dtype"), InputError);
  CHECK_THROWS_AS(read_tensor(kData / "does_not_exist.lstens"), InputError);
}

TEST_CASE("decode_tensor: header claiming 100 floats with 99 present is truncated") {
  std::vector<float> data(100, 1.5f);
  const std::uint64_t shape[] = {100};
  auto bytes = encode_tensor(shape, data);
  bytes.resize(bytes.size() - 4);
  CHECK_THROWS_WITH_AS(decode_tensor(bytes), doctest::Contains("truncated"), InputError);
}

TEST_CASE("property: round-trip identity for random finite tensors") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rank = 1 + rng() % 4;
    std::vector<std::uint64_t> shape(rank);
    for (auto& s : shape) s = 1 + rng() % 6;
    std::vector<float> data(element_count(shape));
    for (auto& x : data) {
      // Arbitrary finite bit patterns, including subnormals and negative zero.
      std::uint32_t bits;
      do {
        bits = static_cast<std::uint32_t>(rng());
      } while ((bits & 0x7F800000u) == 0x7F800000u);
      x = std::bit_cast<float>(bits);
    }
    const auto decoded = decode_tensor(encode_tensor(shape, data));
    REQUIRE(decoded.shape == shape);
    REQUIRE(std::memcmp(decoded.data.data(), data.data(), data.size() * 4) == 0);
  }
}

TEST_CASE("manifest: validation and JSON round-trip") {
  CorpusManifest m;
  m.languages = {"en", "zh"};
  m.samples_per_language = 2;
  m.layers = 1;
  m.hidden_dim = 2;
  m.source = "unit";
  CHECK_NOTHROW(m.validate());
  const auto back = manifest_from_json(to_json(m));
  CHECK(back.languages == m.languages);
  CHECK(back.pooling == Pooling::mean);

  auto dup = m;
  dup.languages = {"en", "en"};
  CHECK_THROWS_AS(dup.validate(), InputError);
  auto tiny = m;
  tiny.samples_per_language = 1;
  CHECK_THROWS_AS(tiny.validate(), InputError);
  auto flat = m;
  flat.hidden_dim = 1;
  CHECK_THROWS_AS(flat.validate(), InputError);
  auto empty = m;
  empty.languages = {"en", ""};
  CHECK_THROWS_AS(empty.validate(), InputError);
}

TEST_CASE("dump: write and reload one layer at a time") {
  testutil::TempDir tmp;
  CorpusManifest m;
  m.languages = {"en", "es"};
  m.samples_per_language = 3;
  m.layers = 2;
  m.hidden_dim = 4;
  m.pooling = Pooling::last_token;
  std::vector<ActivationMatrix> layers;
  for (int l = 0; l < 2; ++l) {
    ActivationMatrix a;
    a.layer_index = l;
    a.languages = m.languages;
    a.labels = canonical_labels(m);
    a.rows = Matrix(6, 4);
    for (std::size_t i = 0; i < a.rows.data.size(); ++i) a.rows.data[i] = 0.25 * static_cast<double>(i) - l;
    layers.push_back(a);
  }
  write_dump(tmp.path(), m, layers);
  const DumpReader reader(tmp.path());
  CHECK(reader.manifest().pooling == Pooling::last_token);
  CHECK(reader.manifest_sha256() == sha256_file(tmp.path() / "manifest.json"));
  const auto l1 = reader.load_layer(1);
  CHECK(l1.rows == layers[1].rows);
  CHECK(l1.labels == layers[1].labels);
  CHECK_THROWS_AS(reader.load_layer(2), InputError);
}

TEST_CASE("dump: missing directory and ungrouped labels are input errors") {
  testutil::TempDir tmp;
  CHECK_THROWS_WITH_AS(DumpReader(tmp.path() / "nope"), doctest::Contains("dump not found"), InputError);

  CorpusManifest m;
  m.languages = {"en", "es"};
  m.samples_per_language = 2;
  m.layers = 1;
  m.hidden_dim = 2;
  ActivationMatrix a;
  a.languages = m.languages;
  a.labels = {"en", "es", "en", "es"};
  a.rows = Matrix(4, 2, 1.0);
  CHECK_THROWS_AS(write_dump(tmp.path() / "d", m, std::span(&a, 1)), InputError);
}
