// SPDX-License-Identifier: Apache-2.0
#include "artic/config.hpp"

namespace artic {

using json = nlohmann::ordered_json;
using config_detail::read_value;
using config_detail::reject_unknown;

namespace {

const char* activation_name(OutputActivation a) {
  return a == OutputActivation::sigmoid ? "sigmoid" : "linear";
}

const char* mode_name(SampleMode m) { return m == SampleMode::midpoint ? "midpoint" : "jittered"; }

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
}

template <typename T>
void read_child(const json& j, const char* key, T& out, const std::string& path) {
  const auto it = j.find(key);
  if (it != j.end()) from_json(*it, out, path + "/" + key);
}

}  // namespace

json parse_json_document(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", what + " is not valid JSON: " + e.what());
  }
}

void config_detail::reject_unknown(const json& j, const json& known, const std::string& path) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ParseError(path + "/" + key, "unknown key");
}

json to_json(const NetworkConfig& c) {
  return {{"frequencies", c.frequencies}, {"hidden", c.hidden},
          {"skip_layer", c.skip_layer},   {"outputs", c.outputs},
          {"output", activation_name(c.output)}, {"softplus_beta", c.softplus_beta}};
}

void from_json(const json& j, NetworkConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_value(j, "frequencies", c.frequencies, path);
  if (j.contains("hidden")) {
    const auto& h = j["hidden"];
    if (!h.is_array()) throw ParseError(path + "/hidden", "expected an array of widths");
    c.hidden.clear();
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (!h[i].is_number_integer() || h[i].get<int>() < 1)
        throw ParseError(path + "/hidden/" + std::to_string(i), "expected a positive integer");
      c.hidden.push_back(h[i].get<int>());
    }
  }
  read_value(j, "skip_layer", c.skip_layer, path);
  read_value(j, "outputs", c.outputs, path);
  std::string out = activation_name(c.output);
  read_value(j, "output", out, path);
  if (out == "linear") c.output = OutputActivation::linear;
  else if (out == "sigmoid") c.output = OutputActivation::sigmoid;
  else throw ParseError(path + "/output", "expected \"linear\" or \"sigmoid\"");
  read_value(j, "softplus_beta", c.softplus_beta, path);
}

json to_json(const FieldConfig& c) {
  return {{"sdf", to_json(c.sdf)},
          {"color", to_json(c.color)},
          {"feature", to_json(c.feature)},
          {"init_log_beta", c.init_log_beta},
          {"init_radius", c.init_radius}};
}

void from_json(const json& j, FieldConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_child(j, "sdf", c.sdf, path);
  read_child(j, "color", c.color, path);
  read_child(j, "feature", c.feature, path);
  read_value(j, "init_log_beta", c.init_log_beta, path);
  read_value(j, "init_radius", c.init_radius, path);
}

json to_json(const SkinningConfig& c) {
  return {{"bones", c.bones},         {"temperature", c.temperature},
          {"delta", c.delta},         {"delta_net", to_json(c.delta_net)},
          {"init_radius", c.init_radius}, {"init_scale", c.init_scale}};
}

void from_json(const json& j, SkinningConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_value(j, "bones", c.bones, path);
  read_value(j, "temperature", c.temperature, path);
  read_value(j, "delta", c.delta, path);
  read_child(j, "delta_net", c.delta_net, path);
  read_value(j, "init_radius", c.init_radius, path);
  read_value(j, "init_scale", c.init_scale, path);
  if (c.bones < 1) throw ParseError(path + "/bones", "need at least one bone");
  if (!(c.temperature > 0.0)) throw ParseError(path + "/temperature", "must be positive");
}

json to_json(const Intrinsics& k) { return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}; }

void from_json(const json& j, Intrinsics& k, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(k), path);
  read_value(j, "fx", k.fx, path);
  read_value(j, "fy", k.fy, path);
  read_value(j, "cx", k.cx, path);
  read_value(j, "cy", k.cy, path);
}

json to_json(const ModelConfig& c) {
  return {{"field", to_json(c.field)},   {"skinning", to_json(c.skinning)},
          {"frames", c.frames},          {"intrinsics", to_json(c.intrinsics)},
          {"width", c.width},            {"height", c.height},
          {"camera_distance", c.camera_distance}};
}

void from_json(const json& j, ModelConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_child(j, "field", c.field, path);
  read_child(j, "skinning", c.skinning, path);
  read_value(j, "frames", c.frames, path);
  read_child(j, "intrinsics", c.intrinsics, path);
  read_value(j, "width", c.width, path);
  read_value(j, "height", c.height, path);
  read_value(j, "camera_distance", c.camera_distance, path);
}

json to_json(const LossWeights& w) {
  return {{"recon", w.recon}, {"sds", w.sds},   {"cyc", w.cyc},
          {"ncyc", w.ncyc},   {"surf", w.surf}, {"smooth", w.smooth}};
}

void from_json(const json& j, LossWeights& w, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(w), path);
  read_value(j, "recon", w.recon, path);
  read_value(j, "sds", w.sds, path);
  read_value(j, "cyc", w.cyc, path);
  read_value(j, "ncyc", w.ncyc, path);
  read_value(j, "surf", w.surf, path);
  read_value(j, "smooth", w.smooth, path);
  try {
    w.validate();
  } catch (const InvariantError& e) {
    throw ParseError(path, e.what());
  }
}

json to_json(const RenderSettings& s) {
  return {{"samples", s.samples}, {"near", s.near}, {"far", s.far},
          {"mode", mode_name(s.mode)}, {"chunk_samples", s.chunk_samples}};
}

void from_json(const json& j, RenderSettings& s, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(s), path);
  read_value(j, "samples", s.samples, path);
  read_value(j, "near", s.near, path);
  read_value(j, "far", s.far, path);
  std::string mode = mode_name(s.mode);
  read_value(j, "mode", mode, path);
  if (mode == "jittered") s.mode = SampleMode::jittered;
  else if (mode == "midpoint") s.mode = SampleMode::midpoint;
  else throw ParseError(path + "/mode", "expected \"jittered\" or \"midpoint\"");
  read_value(j, "chunk_samples", s.chunk_samples, path);
  if (s.samples < 1) throw ParseError(path + "/samples", "need at least one sample per ray");
  if (!(s.near < s.far) || s.near < 0.0) throw ParseError(path, "need 0 <= near < far");
}

json to_json(const SdsSettings& s) {
  return {{"render", to_json(s.render)}, {"width", s.width}, {"height", s.height}};
}

void from_json(const json& j, SdsSettings& s, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(s), path);
  read_child(j, "render", s.render, path);
  read_value(j, "width", s.width, path);
  read_value(j, "height", s.height, path);
}

json to_json(const NovelViewRange& r) {
  return {{"azimuth_min", r.azimuth_min}, {"azimuth_max", r.azimuth_max},
          {"elevation_min", r.elevation_min}, {"elevation_max", r.elevation_max}};
}

void from_json(const json& j, NovelViewRange& r, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(r), path);
  read_value(j, "azimuth_min", r.azimuth_min, path);
  read_value(j, "azimuth_max", r.azimuth_max, path);
  read_value(j, "elevation_min", r.elevation_min, path);
  read_value(j, "elevation_max", r.elevation_max, path);
}

json to_json(const ObjectiveConfig& c) {
  return {{"weights", to_json(c.weights)}, {"rays", c.rays},
          {"novel_rays", c.novel_rays},    {"render", to_json(c.render)},
          {"sds", to_json(c.sds)},         {"novel", to_json(c.novel)},
          {"novel_radius", c.novel_radius}, {"seed", c.seed}};
}

void from_json(const json& j, ObjectiveConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_child(j, "weights", c.weights, path);
  read_value(j, "rays", c.rays, path);
  read_value(j, "novel_rays", c.novel_rays, path);
  read_child(j, "render", c.render, path);
  read_child(j, "sds", c.sds, path);
  read_child(j, "novel", c.novel, path);
  read_value(j, "novel_radius", c.novel_radius, path);
  read_value(j, "seed", c.seed, path);
}

json to_json(const AdamConfig& c) {
  return {{"lr", c.lr},   {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps}, {"group_scale", {{"canonical", c.group_scale[0]},
                                           {"articulation", c.group_scale[1]},
                                           {"camera", c.group_scale[2]}}}};
}

void from_json(const json& j, AdamConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(c), path);
  read_value(j, "lr", c.lr, path);
  read_value(j, "beta1", c.beta1, path);
  read_value(j, "beta2", c.beta2, path);
  read_value(j, "eps", c.eps, path);
  if (j.contains("group_scale")) {
    const auto& g = j["group_scale"];
    const std::string p = path + "/group_scale";
    require_object(g, p);
    reject_unknown(g, to_json(c)["group_scale"], p);
    read_value(g, "canonical", c.group_scale[0], p);
    read_value(g, "articulation", c.group_scale[1], p);
    read_value(g, "camera", c.group_scale[2], p);
  }
  if (c.lr < 0.0) throw ParseError(path + "/lr", "learning rate must be non-negative");
}

json to_json(const Schedule& s) {
  return {{"ncyc_period", s.ncyc_period}, {"sds_period", s.sds_period}, {"sds_enabled", s.sds_enabled}};
}

void from_json(const json& j, Schedule& s, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, to_json(s), path);
  read_value(j, "ncyc_period", s.ncyc_period, path);
  read_value(j, "sds_period", s.sds_period, path);
  read_value(j, "sds_enabled", s.sds_enabled, path);
  if (s.ncyc_period < 1) throw ParseError(path + "/ncyc_period", "period must be at least 1");
  if (s.sds_period < 1) throw ParseError(path + "/sds_period", "period must be at least 1");
}

}  // namespace artic
