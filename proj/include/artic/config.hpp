// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "artic/errors.hpp"
#include "artic/model.hpp"
#include "artic/objectives.hpp"

namespace artic {

/// JSON views of the configuration structs. Readers start from the current value, override
/// the keys present and throw ParseError (with a JSON-pointer path) on unknown keys or wrong types.
nlohmann::ordered_json to_json(const NetworkConfig& c);
nlohmann::ordered_json to_json(const FieldConfig& c);
nlohmann::ordered_json to_json(const SkinningConfig& c);
nlohmann::ordered_json to_json(const Intrinsics& k);
nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const LossWeights& w);
nlohmann::ordered_json to_json(const RenderSettings& s);
nlohmann::ordered_json to_json(const SdsSettings& s);
nlohmann::ordered_json to_json(const NovelViewRange& r);
nlohmann::ordered_json to_json(const ObjectiveConfig& c);
nlohmann::ordered_json to_json(const AdamConfig& c);
nlohmann::ordered_json to_json(const Schedule& s);

void from_json(const nlohmann::ordered_json& j, NetworkConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, FieldConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, SkinningConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, Intrinsics& k, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, ModelConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, LossWeights& w, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, RenderSettings& s, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, SdsSettings& s, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, NovelViewRange& r, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, ObjectiveConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, AdamConfig& c, const std::string& path = "");
void from_json(const nlohmann::ordered_json& j, Schedule& s, const std::string& path = "");

/// Parses a JSON document, mapping syntax errors to ParseError.
nlohmann::ordered_json parse_json_document(const std::string& text, const std::string& what);

namespace config_detail {

/// Throws ParseError for keys of `j` that do not appear in `known`.
void reject_unknown(const nlohmann::ordered_json& j, const nlohmann::ordered_json& known,
                    const std::string& path);

template <typename T>
void read_value(const nlohmann::ordered_json& j, const char* key, T& out, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  const std::string p = path + "/" + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ParseError(p, "expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ParseError(p, "expected an integer");
    if constexpr (std::is_unsigned_v<T>)
      if (it->template get<long long>() < 0) throw ParseError(p, "expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw ParseError(p, "expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ParseError(p, "expected a string");
  }
  out = it->template get<T>();
}

}  // namespace config_detail

}  // namespace artic
