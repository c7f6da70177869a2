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

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "favit/error.hpp"
#include "favit/model.hpp"

// Variant config schema:
// {
//   "name": "B0",
//   "sample_side": 7,          optional, default 7
//   "fusion": "max",           optional, "max" | "mean"
//   "num_classes": 1000,       optional
//   "stages": [                exactly four entries
//     {"patch_size": 4, "channels": 32, "heads": 1, "mlp_ratio": 8,
//      "blocks": 2, "dilations": [1, 8]}, ...
//   ]
// }
namespace favit {

namespace {

using nlohmann::json;

std::size_t positive(const json& obj, const char* key) {
  if (!obj.contains(key)) throw FormatError(std::string("variant config: missing '") + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
    throw FormatError(std::string("variant config: '") + key + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

VariantSpec variant_from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("variant config: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("variant config: top level must be an object");

  VariantSpec spec;
  spec.name = doc.value("name", std::string("custom"));
  if (doc.contains("sample_side")) spec.sample_side = positive(doc, "sample_side");
  if (doc.contains("num_classes")) spec.num_classes = positive(doc, "num_classes");
  if (doc.contains("fusion")) {
    if (!doc["fusion"].is_string()) throw FormatError("variant config: 'fusion' must be a string");
    spec.fusion = parse_fusion(doc["fusion"].get<std::string>());
  }
  if (!doc.contains("stages") || !doc["stages"].is_array() || doc["stages"].size() != kStages) {
    throw FormatError("variant config: 'stages' must be an array of four stage objects");
  }
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto& st = doc["stages"][s];
    if (!st.is_object()) throw FormatError("variant config: stage entries must be objects");
    StageSpec& out = spec.stages[s];
    out.patch_size = positive(st, "patch_size");
    out.channels = positive(st, "channels");
    out.heads = positive(st, "heads");
    out.mlp_ratio = positive(st, "mlp_ratio");
    out.blocks = positive(st, "blocks");
    if (!st.contains("dilations") || !st["dilations"].is_array() || st["dilations"].empty()) {
      throw FormatError("variant config: 'dilations' must be a non-empty array");
    }
    out.dilations.clear();
    for (const auto& d : st["dilations"]) {
      if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
        throw FormatError("variant config: dilation rates must be positive integers");
      }
      out.dilations.push_back(d.get<std::size_t>());
    }
  }
  spec.validate();
  return spec;
}

std::string variant_to_json_text(const VariantSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["sample_side"] = spec.sample_side;
  doc["fusion"] = std::string(fusion_name(spec.fusion));
  doc["num_classes"] = spec.num_classes;
  doc["stages"] = json::array();
  for (const auto& st : spec.stages) {
    doc["stages"].push_back({{"patch_size", st.patch_size},
                             {"channels", st.channels},
                             {"heads", st.heads},
                             {"mlp_ratio", st.mlp_ratio},
                             {"blocks", st.blocks},
                             {"dilations", st.dilations}});
  }
  return doc.dump(2);
}

VariantSpec load_variant_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open variant config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return variant_from_json_text(text.str());
}

}  // namespace favit
