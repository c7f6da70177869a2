// Copyright 2026 The FaViT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "favit/error.hpp"
#include "favit/param_store.hpp"
#include "favit/serialize.hpp"

namespace favit {
namespace {

ParamStore sample_store(std::uint64_t seed) {
  ParamStore store(seed);
  store.add("a.weight", {3, 4}, Init::kTruncatedNormal);
  store.add("a.bias", {4}, Init::kZeros);
  store.add("b", {2, 1, 3}, Init::kOnes);
  return store;
}

TEST(ParamStore, TruncatedNormalStaysWithinTwoSigma) {
  ParamStore store(7);
  Tensor w = store.add("w", {100, 100}, Init::kTruncatedNormal);
  double sum = 0.0;
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), 2 * kInitStddev);
    sum += v;
  }
  EXPECT_NEAR(sum / 1e4, 0.0, 1e-3);
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore store;
  store.add("x", {1}, Init::kZeros);
  EXPECT_THROW(store.add("x", {1}, Init::kZeros), ConfigError);
  EXPECT_THROW(store.get("y"), IndexError);
  EXPECT_TRUE(store.contains("x"));
  EXPECT_EQ(store.count_elements(), 1u);
}

TEST(ParamStore, SameSeedSameValues) {
  auto a = sample_store(3), b = sample_store(3), c = sample_store(4);
  const auto& wa = a.get("a.weight");
  EXPECT_EQ(std::memcmp(wa.data().data(), b.get("a.weight").data().data(), wa.size() * sizeof(double)), 0);
  EXPECT_NE(std::memcmp(wa.data().data(), c.get("a.weight").data().data(), wa.size() * sizeof(double)), 0);
}

TEST(Serialize, StreamRoundTripIsBitExact) {
  auto store = sample_store(11);
  std::stringstream buf;
  write_weights(buf, store.entries());
  const auto loaded = read_weights(buf);
  ASSERT_EQ(loaded.size(), store.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& [name, t] = store.entries()[i];
    EXPECT_EQ(loaded[i].first, name);
    EXPECT_EQ(loaded[i].second.shape(), t.shape());
    EXPECT_EQ(std::memcmp(loaded[i].second.data().data(), t.data().data(), t.size() * sizeof(double)), 0);
  }
}

TEST(Serialize, FileRoundTripAndAssign) {
  const auto path = std::filesystem::temp_directory_path() / "favit_serialize_test.bin";
  auto src = sample_store(12);
  save_weights(path, src);
  auto dst = sample_store(13);
  assign_weights(dst, load_weights(path));
  EXPECT_EQ(dst.get("a.weight")[5], src.get("a.weight")[5]);
  std::filesystem::remove(path);
}

TEST(Serialize, RejectsMismatchedStore) {
  auto src = sample_store(1);
  std::stringstream buf;
  write_weights(buf, src.entries());
  const auto loaded = read_weights(buf);
  ParamStore other;
  other.add("a.weight", {4, 3}, Init::kZeros);
  other.add("a.bias", {4}, Init::kZeros);
  other.add("b", {2, 1, 3}, Init::kZeros);
  EXPECT_THROW(assign_weights(other, loaded), FormatError);
  ParamStore fewer;
  fewer.add("a.weight", {3, 4}, Init::kZeros);
  EXPECT_THROW(assign_weights(fewer, loaded), FormatError);
}

TEST(Serialize, RejectsCorruptStreams) {
  auto store = sample_store(2);
  std::stringstream buf;
  write_weights(buf, store.entries());
  const std::string bytes = buf.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_weights(truncated), FormatError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream m(bad_magic);
  EXPECT_THROW(read_weights(m), FormatError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  std::stringstream v(bad_version);
  EXPECT_THROW(read_weights(v), FormatError);

  EXPECT_THROW(load_weights("/nonexistent/favit.bin"), FormatError);
}

}  // namespace
}  // namespace favit
