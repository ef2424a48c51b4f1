// SPDX-License-Identifier: Apache-2.0
#include "artic/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "artic/codec.hpp"
#include "artic/config.hpp"
#include "artic/errors.hpp"
#include "artic/image_io.hpp"

namespace artic {

using json = nlohmann::ordered_json;
using config_detail::read_value;
namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void read_vec(const json& j, const char* key, Vec3& v, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  const std::string p = path + "/" + key;
  if (!it->is_array() || it->size() != 3) throw ParseError(p, "expected 3 numbers");
  for (int i = 0; i < 3; ++i) {
    if (!(*it)[static_cast<std::size_t>(i)].is_number()) throw ParseError(p, "expected 3 numbers");
    v[i] = (*it)[static_cast<std::size_t>(i)].get<double>();
  }
}

json transform_json(const RigidTransform& t) {
  const Vec4& q = t.rotation.wxyz();
  return {{"rotation_quat_wxyz", json::array({q[0], q[1], q[2], q[3]})},
          {"translation_xyz", vec_json(t.translation)}};
}

std::string frame_stem(const std::string& dir, int t) {
  char name[32];
  std::snprintf(name, sizeof name, "%04d", t);
  return (fs::path(dir) / "frames" / name).string();
}

std::vector<float> to_f32(const double* v, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

void SceneSpec::validate() const {
  if (frames < 2) throw InvariantError("a scene needs at least 2 frames");
  if (width < 1 || height < 1) throw InvariantError("image size must be positive");
  if (!(focal > 0.0) || !(camera_distance > 0.0)) throw InvariantError("camera must be in front");
  if (!(capsule_radius > 0.0) || !(beta > 0.0) || !(bone_scale > 0.0) || !(temperature > 0.0))
    throw InvariantError("rig sizes must be positive");
  if (feature_dim < 0) throw InvariantError("feature_dim must be non-negative");
  if (bend_axis.norm() == 0.0) throw InvariantError("bend axis must be non-zero");
  const double vals[] = {bend_amplitude_deg, translation_per_frame.norm(), camera_azimuth_step_deg,
                         joint.norm(), capsule_a.norm(), capsule_b.norm(), bone_offset};
  for (double v : vals)
    if (!std::isfinite(v)) throw InvariantError("scene trajectories must be finite");
}

json to_json(const SceneSpec& s) {
  return {{"frames", s.frames},
          {"width", s.width},
          {"height", s.height},
          {"focal", s.focal},
          {"camera_distance", s.camera_distance},
          {"capsule_a", vec_json(s.capsule_a)},
          {"capsule_b", vec_json(s.capsule_b)},
          {"capsule_radius", s.capsule_radius},
          {"beta", s.beta},
          {"feature_dim", s.feature_dim},
          {"joint", vec_json(s.joint)},
          {"bone_offset", s.bone_offset},
          {"bone_scale", s.bone_scale},
          {"temperature", s.temperature},
          {"bend_amplitude_deg", s.bend_amplitude_deg},
          {"bend_axis", vec_json(s.bend_axis)},
          {"translation_per_frame", vec_json(s.translation_per_frame)},
          {"camera_azimuth_step_deg", s.camera_azimuth_step_deg},
          {"render", to_json(s.render)},
          {"seed", s.seed}};
}

void from_json(const json& j, SceneSpec& s, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  config_detail::reject_unknown(j, to_json(s), path);
  read_value(j, "frames", s.frames, path);
  read_value(j, "width", s.width, path);
  read_value(j, "height", s.height, path);
  read_value(j, "focal", s.focal, path);
  read_value(j, "camera_distance", s.camera_distance, path);
  read_vec(j, "capsule_a", s.capsule_a, path);
  read_vec(j, "capsule_b", s.capsule_b, path);
  read_value(j, "capsule_radius", s.capsule_radius, path);
  read_value(j, "beta", s.beta, path);
  read_value(j, "feature_dim", s.feature_dim, path);
  read_vec(j, "joint", s.joint, path);
  read_value(j, "bone_offset", s.bone_offset, path);
  read_value(j, "bone_scale", s.bone_scale, path);
  read_value(j, "temperature", s.temperature, path);
  read_value(j, "bend_amplitude_deg", s.bend_amplitude_deg, path);
  read_vec(j, "bend_axis", s.bend_axis, path);
  read_vec(j, "translation_per_frame", s.translation_per_frame, path);
  read_value(j, "camera_azimuth_step_deg", s.camera_azimuth_step_deg, path);
  if (j.contains("render")) from_json(j["render"], s.render, path + "/render");
  read_value(j, "seed", s.seed, path);
  try {
    s.validate();
  } catch (const InvariantError& e) {
    throw ParseError(path, e.what());
  }
}

double bend_angle(const SceneSpec& spec, int t) {
  return spec.bend_amplitude_deg * kDeg * std::sin(2.0 * std::numbers::pi * t / spec.frames);
}

int flow_pair(int t, int frames) { return t + 1 < frames ? t + 1 : t - 1; }

Intrinsics GroundTruth::intrinsics() const {
  return {spec.focal, spec.focal, 0.5 * spec.width, 0.5 * spec.height};
}

Articulation GroundTruth::articulation() const {
  return Articulation::build(sequence, bones, spec.temperature);
}

int GroundTruth::part(const Vec3& canonical) const {
  const Vec3 axis = (spec.capsule_b - spec.capsule_a).normalized();
  return (canonical - spec.joint).dot(axis) > 0.0 ? 1 : 0;
}

GroundTruth make_ground_truth(const SceneSpec& spec) {
  spec.validate();
  GroundTruth gt;
  gt.spec = spec;
  gt.field = std::make_unique<AnalyticField>(
      AnalyticShape::capsule(spec.capsule_a, spec.capsule_b, spec.capsule_radius), spec.feature_dim,
      spec.beta, splitmix64(spec.seed ^ 0x7e57u));
  const Vec3 axis = (spec.capsule_b - spec.capsule_a).normalized();
  gt.bones.resize(2);
  gt.bones[0].center = spec.joint - spec.bone_offset * axis;
  gt.bones[1].center = spec.joint + spec.bone_offset * axis;
  for (auto& b : gt.bones) b.log_scales = Vec3::Constant(std::log(spec.bone_scale));

  const Intrinsics k = gt.intrinsics();
  gt.sequence = MotionSequence(spec.frames, 2, k, spec.width, spec.height);
  for (int t = 0; t < spec.frames; ++t) {
    const Vec3 shift = static_cast<double>(t) * spec.translation_per_frame;
    const RigidTransform bend = RigidTransform::rotate_about(
        Rotation::from_axis_angle(spec.bend_axis, bend_angle(spec, t)), spec.joint);
    gt.sequence.frame_transform(t, 0) = {Rotation::identity(), shift};
    gt.sequence.frame_transform(t, 1) = compose(RigidTransform{Rotation::identity(), shift}, bend);
    gt.sequence.camera(t) = {Rotation::ry(-spec.camera_azimuth_step_deg * kDeg * t),
                             Vec3(0, 0, spec.camera_distance)};
  }
  return gt;
}

void synth_dataset(const SceneSpec& spec, const std::string& dir) {
  const GroundTruth gt = make_ground_truth(spec);
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "frames", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir + "': " + ec.message());
  const Articulation art = gt.articulation();
  const Intrinsics k = gt.intrinsics();
  const RayRenderer renderer(*gt.field, gt.store, art, k, spec.render);
  const int w = spec.width, h = spec.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  json frames = json::array();
  for (int t = 0; t < spec.frames; ++t) {
    const int pair = flow_pair(t, spec.frames);
    const RenderedImage img =
        render_image(renderer, gt.sequence.view(t), t, FieldQuery{}, pair, splitmix64(static_cast<std::uint64_t>(t)));
    const std::string stem = frame_stem(dir, t);
    write_ppm(stem + ".rgb.ppm", w, h, img.color);
    write_gray_ppm(stem + ".sil.ppm", w, h, img.opacity);
    write_f32(stem + ".rgb.f32", to_f32(img.color.data()->data(), 3 * n));
    write_f32(stem + ".sil.f32", to_f32(img.opacity.data(), n));
    std::vector<float> feat(n * static_cast<std::size_t>(spec.feature_dim));
    for (std::size_t p = 0; p < n; ++p)
      for (int c = 0; c < spec.feature_dim; ++c)
        feat[p * static_cast<std::size_t>(spec.feature_dim) + static_cast<std::size_t>(c)] =
            static_cast<float>(img.feature[p][c]);
    write_f32(stem + ".feat.f32", feat);
    write_f32(stem + ".flow.f32", to_f32(img.flow.data()->data(), 2 * n));
    const json meta{{"frame", t},
                    {"width", w},
                    {"height", h},
                    {"feature_dim", spec.feature_dim},
                    {"flow_pair", pair},
                    {"intrinsics", to_json(k)},
                    {"camera", transform_json(gt.sequence.camera(t))}};
    write_file(stem + ".meta.json", meta.dump(2) + "\n");
    json parts = json::array();
    for (int b = 0; b < 2; ++b) parts.push_back(transform_json(gt.sequence.frame_transform(t, b)));
    frames.push_back({{"frame", t}, {"camera", transform_json(gt.sequence.camera(t))}, {"parts", parts}});
  }
  const json scene{{"format_version", 1},
                   {"frame_count", spec.frames},
                   {"width", w},
                   {"height", h},
                   {"feature_dim", spec.feature_dim},
                   {"intrinsics", to_json(k)},
                   {"synthetic", to_json(spec)},
                   {"trajectories", frames}};
  write_file((fs::path(dir) / "scene.json").string(), scene.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const std::string scene_path = (fs::path(dir) / "scene.json").string();
  if (!fs::exists(scene_path)) throw ParseError(scene_path, "dataset has no scene.json");
  const json scene = parse_json_document(read_file(scene_path), scene_path);
  auto need = [&](const json& j, const char* key, const std::string& file) -> const json& {
    if (!j.is_object() || !j.contains(key)) throw ParseError(file + "#/" + key, "missing");
    return j[key];
  };
  Dataset ds;
  TrainingData& d = ds.data;
  int frames = 0, feature_dim = 0;
  try {
    frames = need(scene, "frame_count", scene_path).get<int>();
    d.width = need(scene, "width", scene_path).get<int>();
    d.height = need(scene, "height", scene_path).get<int>();
    feature_dim = need(scene, "feature_dim", scene_path).get<int>();
  } catch (const nlohmann::json::type_error& e) {
    throw ParseError(scene_path, e.what());
  }
  from_json(need(scene, "intrinsics", scene_path), d.intrinsics, scene_path + "#/intrinsics");
  if (frames < 1 || d.width < 1 || d.height < 1 || feature_dim < 0)
    throw ParseError(scene_path, "invalid dataset dimensions");
  if (scene.contains("synthetic")) {
    SceneSpec s;
    from_json(scene["synthetic"], s, scene_path + "#/synthetic");
    ds.scene = s;
  }
  const std::size_t n = static_cast<std::size_t>(d.width) * d.height;
  for (int t = 0; t < frames; ++t) {
    const std::string stem = frame_stem(dir, t);
    const std::string meta_path = stem + ".meta.json";
    const json meta = parse_json_document(read_file(meta_path), meta_path);
    int pair = -1;
    try {
      if (need(meta, "width", meta_path).get<int>() != d.width ||
          need(meta, "height", meta_path).get<int>() != d.height)
        throw ParseError(meta_path, "frame size differs from scene.json");
      if (need(meta, "feature_dim", meta_path).get<int>() != feature_dim)
        throw ParseError(meta_path + "#/feature_dim", "differs from scene.json");
      pair = need(meta, "flow_pair", meta_path).get<int>();
    } catch (const nlohmann::json::type_error& e) {
      throw ParseError(meta_path, e.what());
    }
    if (pair >= frames) throw ParseError(meta_path + "#/flow_pair", "frame out of range");
    FrameObservation f;
    const auto rgb = read_f32(stem + ".rgb.f32", 3 * n);
    const auto sil = read_f32(stem + ".sil.f32", n);
    f.rgb.resize(n);
    f.silhouette.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      f.rgb[p] = Vec3(rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]);
      f.silhouette[p] = sil[p];
      if (!(f.silhouette[p] >= 0.0 && f.silhouette[p] <= 1.0))
        throw ParseError(stem + ".sil.f32", "silhouette outside [0, 1]");
    }
    const auto feat = read_f32(stem + ".feat.f32", n * static_cast<std::size_t>(feature_dim));
    f.feature.resize(feature_dim, static_cast<Eigen::Index>(n));
    for (std::size_t p = 0; p < n; ++p)
      for (int c = 0; c < feature_dim; ++c)
        f.feature(c, static_cast<Eigen::Index>(p)) = feat[p * static_cast<std::size_t>(feature_dim) + static_cast<std::size_t>(c)];
    if (pair >= 0) {
      const auto flow = read_f32(stem + ".flow.f32", 2 * n);
      f.flow.resize(n);
      for (std::size_t p = 0; p < n; ++p) f.flow[p] = Vec2(flow[2 * p], flow[2 * p + 1]);
      f.flow_frame = pair;
    }
    d.frames.push_back(std::move(f));
  }
  return ds;
}

double dataset_recon_loss(const CanonicalField& field, const ParameterStore& store,
                          const Articulation& art, const TrainingData& data,
                          const RenderSettings& render) {
  const RayRenderer renderer(field, store, art, data.intrinsics, render);
  const Camera cam(RigidTransform::identity(), data.intrinsics, data.width, data.height);
  std::vector<ReconElement> elements;
  for (std::size_t t = 0; t < data.frames.size(); ++t) {
    const auto& f = data.frames[t];
    const RenderedImage img = render_image(renderer, cam, static_cast<int>(t), FieldQuery{},
                                           f.flow.empty() ? -1 : f.flow_frame,
                                           splitmix64(static_cast<std::uint64_t>(t)));
    for (std::size_t p = 0; p < f.rgb.size(); ++p) {
      ReconElement e;
      e.color_render = img.color[p];
      e.color_obs = f.rgb[p];
      e.feature_render = img.feature[p];
      e.feature_obs = f.feature.col(static_cast<Eigen::Index>(p));
      e.silhouette_render = img.opacity[p];
      e.silhouette_obs = f.silhouette[p];
      e.has_flow = !f.flow.empty() && img.flow_valid[p];
      if (e.has_flow) {
        e.flow_render = img.flow[p];
        e.flow_obs = f.flow[p];
      }
      elements.push_back(std::move(e));
    }
  }
  return loss_recon(elements);
}

}  // namespace artic
