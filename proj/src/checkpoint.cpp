// SPDX-License-Identifier: Apache-2.0
#include "artic/checkpoint.hpp"

#include "artic/codec.hpp"
#include "artic/config.hpp"
#include "artic/errors.hpp"

namespace artic {

using json = nlohmann::ordered_json;

namespace {

const char* kind_name(ParamKind k) { return k == ParamKind::quaternion ? "quaternion" : "plain"; }

const json& child(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "/" + key, "missing");
  return *it;
}

}  // namespace

std::string serialize_checkpoint(const ArticulatedModel& model) {
  const ParameterStore& store = model.store();
  json groups = json::object();
  for (ParamGroup g : {ParamGroup::canonical, ParamGroup::articulation, ParamGroup::camera})
    groups[std::string(to_string(g))] = json::object();
  for (const auto& b : store.blocks()) {
    groups[std::string(to_string(b.group))][b.name] = {
        {"shape", b.shape},
        {"kind", kind_name(b.kind)},
        {"data", encode_f64(store.all().subspan(b.offset, b.size))}};
  }
  const json j{{"format_version", kCheckpointFormatVersion},
               {"metadata", {{"model", to_json(model.config())}}},
               {"groups", groups}};
  return j.dump() + "\n";
}

std::unique_ptr<ArticulatedModel> parse_checkpoint(const std::string& text) {
  const json j = parse_json_document(text, "checkpoint");
  const json& version = child(j, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion)
    throw ParseError("/format_version", "unsupported checkpoint version");
  ModelConfig cfg;
  from_json(child(child(j, "metadata", ""), "model", "/metadata"), cfg, "/metadata/model");
  std::unique_ptr<ArticulatedModel> model;
  try {
    model = std::make_unique<ArticulatedModel>(cfg);
  } catch (const InvariantError& e) {
    throw ParseError("/metadata/model", e.what());
  }
  ParameterStore& store = model->store();
  const json& groups = child(j, "groups", "");
  for (const auto& b : store.blocks()) {
    const std::string gp = "/groups/" + std::string(to_string(b.group));
    const json& entry = child(child(groups, std::string(to_string(b.group)), "/groups"), b.name, gp);
    const std::string p = gp + "/" + b.name;
    const json& shape = child(entry, "shape", p);
    if (!shape.is_array() || shape.get<std::vector<int>>() != b.shape)
      throw ParseError(p + "/shape", "does not match the model configuration");
    const json& kind = child(entry, "kind", p);
    if (!kind.is_string() || kind.get<std::string>() != kind_name(b.kind))
      throw ParseError(p + "/kind", "does not match the model configuration");
    const json& data = child(entry, "data", p);
    if (!data.is_string()) throw ParseError(p + "/data", "expected a base64 string");
    const auto values = decode_f64(data.get<std::string>(), p + "/data");
    if (values.size() != b.size) throw ParseError(p + "/data", "wrong number of values");
    std::copy(values.begin(), values.end(), store.all().begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  for (const auto& [g, members] : groups.items()) {
    const auto group = parse_group(g);
    if (!group) throw ParseError("/groups/" + g, "unknown parameter group");
    if (!members.is_object()) throw ParseError("/groups/" + g, "expected an object");
    for (const auto& [name, entry] : members.items()) {
      const auto h = store.find(name);
      if (!h || store.block(*h).group != *group)
        throw ParseError("/groups/" + g + "/" + name, "block is not defined by the model");
    }
  }
  return model;
}

void save_checkpoint(const ArticulatedModel& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

std::unique_ptr<ArticulatedModel> load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace artic
