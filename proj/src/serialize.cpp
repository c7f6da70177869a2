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

#include "favit/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "favit/error.hpp"

namespace favit {

namespace {

constexpr char kMagic[4] = {'F', 'A', 'V', 'T'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("weight file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_weights(std::ostream& out, const NamedTensors& tensors) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kWeightFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
  }
  if (!out) throw FormatError("failed writing weights");
}

NamedTensors read_weights(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw FormatError("bad magic, not a FAVT file");
  const auto version = take<std::uint32_t>(in);
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight format version " + std::to_string(version));
  }
  const auto count = take<std::uint32_t>(in);
  NamedTensors tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("weight file truncated in tensor name");
    const auto rank = take<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) {
      e = static_cast<std::size_t>(take<std::uint64_t>(in));
      if (e == 0) throw FormatError("tensor '" + name + "' has a zero extent");
    }
    std::vector<double> values(numel(shape));
    for (double& v : values) v = take<double>(in);
    tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return tensors;
}

void save_weights(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_weights(out, store.entries());
}

NamedTensors load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_weights(in);
}

void assign_weights(ParamStore& store, const NamedTensors& loaded) {
  if (loaded.size() != store.size()) {
    throw FormatError("weight file holds " + std::to_string(loaded.size()) + " tensors, model has " +
                      std::to_string(store.size()));
  }
  for (const auto& [name, value] : loaded) {
    Tensor target = store.get(name);
    if (target.shape() != value.shape()) {
      throw FormatError("shape mismatch for '" + name + "': file " + to_string(value.shape()) + ", model " +
                        to_string(target.shape()));
    }
    std::ranges::copy(value.data(), target.data().begin());
  }
}

}  // namespace favit
