// SPDX-License-Identifier: Apache-2.0
#include "artic/pipeline.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "artic/config.hpp"
#include "artic/errors.hpp"

namespace artic {

using json = nlohmann::ordered_json;
using config_detail::read_value;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kAzimuthBins = 36;

const char* prior_name(PriorKind p) { return p == PriorKind::mock ? "mock" : "none"; }

}  // namespace

void FitConfig::validate() const {
  if (steps < 0) throw InvariantError("steps must be non-negative");
  if (schedule.ncyc_period < 1 || schedule.sds_period < 1)
    throw InvariantError("update periods must be at least 1");
  objective.weights.validate();
}

json to_json(const FitConfig& c) {
  return {{"model", to_json(c.model)},       {"objective", to_json(c.objective)},
          {"adam", to_json(c.adam)},         {"schedule", to_json(c.schedule)},
          {"steps", c.steps},                {"seed", c.seed},
          {"prior", prior_name(c.prior)}};
}

void from_json(const json& j, FitConfig& c, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  config_detail::reject_unknown(j, to_json(c), path);
  if (j.contains("model")) from_json(j["model"], c.model, path + "/model");
  if (j.contains("objective")) from_json(j["objective"], c.objective, path + "/objective");
  if (j.contains("adam")) from_json(j["adam"], c.adam, path + "/adam");
  if (j.contains("schedule")) from_json(j["schedule"], c.schedule, path + "/schedule");
  read_value(j, "steps", c.steps, path);
  read_value(j, "seed", c.seed, path);
  std::string prior = prior_name(c.prior);
  read_value(j, "prior", prior, path);
  if (prior == "none") c.prior = PriorKind::none;
  else if (prior == "mock") c.prior = PriorKind::mock;
  else throw ParseError(path + "/prior", "expected \"none\" or \"mock\"");
  if (c.steps < 0) throw ParseError(path + "/steps", "must be non-negative");
}

FitConfig toy_fit_config() {
  FitConfig c;
  c.model.field.sdf = {4, {32, 32}, -1, 1, OutputActivation::linear, 100.0};
  c.model.field.color = {2, {16}, -1, 3, OutputActivation::sigmoid, 100.0};
  c.model.field.feature = {2, {16}, -1, kDefaultFeatureDim, OutputActivation::linear, 100.0};
  c.model.field.init_radius = 0.4;
  c.model.field.init_log_beta = std::log(0.02);
  c.model.skinning.bones = 4;
  c.model.skinning.init_radius = 0.3;
  c.model.skinning.init_scale = 0.25;
  c.objective.rays = 256;
  c.objective.novel_rays = 64;
  c.objective.render = {64, 1.8, 4.2, SampleMode::jittered, 4096};
  c.objective.sds.render = {16, 1.8, 4.2, SampleMode::jittered, 4096};
  c.adam.lr = 5e-3;
  c.steps = 3000;
  return c;
}

std::unique_ptr<ArticulatedModel> initial_model(const TrainingData& data, const FitConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.frames = static_cast<int>(data.frames.size());
  mc.intrinsics = data.intrinsics;
  mc.width = data.width;
  mc.height = data.height;
  if (!data.frames.empty()) mc.field.feature.outputs = static_cast<int>(data.frames[0].feature.rows());
  auto model = std::make_unique<ArticulatedModel>(mc);
  model->initialize(cfg.seed);
  return model;
}

FitResult fit(const TrainingData& data, const FitConfig& cfg, std::ostream* trace,
              const FitProgress& progress) {
  cfg.validate();
  FitResult res;
  res.model = initial_model(data, cfg);
  ObjectiveConfig oc = cfg.objective;
  oc.seed = cfg.seed;
  Schedule schedule = cfg.schedule;
  std::unique_ptr<PriorGradientSource> prior;
  if (cfg.prior == PriorKind::mock) {
    // Pulls novel renders towards the observed image of the same frame.
    prior = std::make_unique<MockL2Prior>([&data](const NovelView& v, int w, int h) {
      PriorImage target{w, h, {}};
      const auto& f = data.frames.at(static_cast<std::size_t>(v.frame));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          target.rgb.push_back(f.rgb[static_cast<std::size_t>(y * data.height / h) * data.width +
                                     static_cast<std::size_t>(x * data.width / w)]);
      return target;
    });
    schedule.sds_enabled = true;
  } else {
    schedule.sds_enabled = false;
  }
  const Objective objective(*res.model, data, oc, prior.get());
  auto fn = [&](int step, bool ncyc, bool sds, Gradient& g) {
    return objective.evaluate(static_cast<std::uint64_t>(step), ncyc, sds, g);
  };
  res.trace = optimize(res.model->store(), fn, cfg.steps, cfg.adam, schedule, trace, progress).trace;
  return res;
}

// ---- evaluation -------------------------------------------------------------------

IouReport silhouette_iou(const ArticulatedModel& model, const TrainingData& data,
                         const RenderSettings& render) {
  const Articulation art = model.articulation();
  const RayRenderer renderer(model.field(), model.store(), art, data.intrinsics, render);
  const Camera cam(RigidTransform::identity(), data.intrinsics, data.width, data.height);
  IouReport r;
  for (std::size_t t = 0; t < data.frames.size(); ++t) {
    const RenderedImage img =
        render_image(renderer, cam, static_cast<int>(t), FieldQuery{false, false}, -1, t);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < img.opacity.size(); ++p) {
      const bool a = img.opacity[p] > 0.5, b = data.frames[t].silhouette[p] > 0.5;
      inter += a && b;
      uni += a || b;
    }
    r.per_frame.push_back(uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  double s = 0.0;
  for (double v : r.per_frame) s += v;
  r.mean = r.per_frame.empty() ? 0.0 : s / static_cast<double>(r.per_frame.size());
  return r;
}

RotationReport rotation_error(const ArticulatedModel& model, const GroundTruth& gt, int grid) {
  const MotionSequence seq = model.sequence();
  const int frames = seq.frame_count(), nb = seq.bone_count();
  if (frames != gt.sequence.frame_count())
    throw InvariantError("model and ground truth disagree on the frame count");
  const Articulation art = model.articulation();
  const Articulation gt_art = gt.articulation();

  // Skinning mass of each learned bone per ground-truth part over interior points.
  std::vector<std::array<double, 2>> votes(static_cast<std::size_t>(nb), {0.0, 0.0});
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(grid) * grid * grid);
  for (int k = 0, c = 0; k < grid; ++k)
    for (int j = 0; j < grid; ++j)
      for (int i = 0; i < grid; ++i, ++c)
        pts.col(c) = Vec3(i + 0.5, j + 0.5, k + 0.5) * (2.0 / grid) - Vec3::Ones();
  const Eigen::VectorXd sdf = model.field().sdf(model.store(), pts);
  bool any = false;
  for (Eigen::Index c = 0; c < pts.cols(); ++c) {
    if (sdf[c] >= 0.0) continue;
    any = true;
    const Vec3 v = pts.col(c);
    const Eigen::VectorXd w = model.skinning().weights(model.store(), v);
    const int part = gt.part(warp_backward(gt_art, warp_forward(art, v, 0), 0));
    for (int b = 0; b < nb; ++b) votes[static_cast<std::size_t>(b)][static_cast<std::size_t>(part)] += w[b];
  }
  if (!any) throw InvariantError("the fitted field has no interior to compare bones on");

  auto observed = [](const MotionSequence& s, int t, int b) {
    return compose(s.camera(t), s.delta(t, b));
  };
  RotationReport r;
  double total = 0.0, mass = 0.0;
  for (int b = 0; b < nb; ++b) {
    const auto& v = votes[static_cast<std::size_t>(b)];
    const int part = v[1] > v[0] ? 1 : 0;
    r.bone_to_part.push_back(part);
    r.bone_mass.push_back(v[0] + v[1]);
    double err = 0.0;
    for (int t = 1; t < frames; ++t) {
      const Rotation learned = compose(observed(seq, t, b), observed(seq, 0, b).inverse()).rotation;
      const Rotation truth =
          compose(observed(gt.sequence, t, part), observed(gt.sequence, 0, part).inverse()).rotation;
      err += rotation_angle(learned, truth);
    }
    err /= std::max(frames - 1, 1);
    total += (v[0] + v[1]) * err;
    mass += v[0] + v[1];
  }
  r.mean_deg = total / mass / kDeg;
  return r;
}

AzimuthCoverage azimuth_coverage(std::span<const RigidTransform> cameras) {
  AzimuthCoverage c;
  c.bins.assign(kAzimuthBins, 0);
  for (const auto& p : cameras) {
    const Vec3 axis = p.rotation.matrix().transpose() * Vec3::UnitZ();
    const double az = std::atan2(axis.x(), axis.z()) / kDeg;
    c.azimuth_deg.push_back(az);
    const long bin = std::lround(az / (360.0 / kAzimuthBins));
    ++c.bins[static_cast<std::size_t>(((bin % kAzimuthBins) + kAzimuthBins) % kAzimuthBins)];
  }
  int occupied = 0;
  for (int n : c.bins) occupied += n > 0;
  c.ratio = static_cast<double>(occupied) / kAzimuthBins;
  return c;
}

AzimuthCoverage azimuth_coverage(const ArticulatedModel& model) {
  const MotionSequence seq = model.sequence();
  std::vector<RigidTransform> cams;
  for (int t = 0; t < seq.frame_count(); ++t) cams.push_back(seq.camera(t));
  return azimuth_coverage(cams);
}

// ---- rendering and export -----------------------------------------------------------

RenderedImage render_view(const ArticulatedModel& model, int t, const std::optional<NovelView>& novel,
                          const RenderSettings& render, int flow_frame) {
  const ModelConfig& mc = model.config();
  if (t < 0 || t >= mc.frames) throw FrameRangeError(t, mc.frames);
  const Articulation art = model.articulation();
  const RayRenderer renderer(model.field(), model.store(), art, mc.intrinsics, render);
  RigidTransform pose = RigidTransform::identity();
  if (novel) {
    NovelView v = *novel;
    v.frame = t;
    pose = novel_view_pose(v);
  }
  const Camera cam(pose, mc.intrinsics, mc.width, mc.height);
  return render_image(renderer, cam, t, FieldQuery{true, false}, novel ? -1 : flow_frame,
                      static_cast<std::uint64_t>(t));
}

TriangleMesh extract_mesh(const ArticulatedModel& model, int resolution, const GridBounds& bounds) {
  TriangleMesh mesh = marching_cubes(model.field(), model.store(), resolution, bounds);
  if (!mesh.empty()) color_vertices(mesh, model.field(), model.store());
  return mesh;
}

ArticulatedBundle build_bundle(const ArticulatedModel& model, const TriangleMesh& rest_mesh,
                               int resolution, std::uint64_t threshold,
                               const std::string& checkpoint_hash) {
  ArticulatedBundle b;
  b.skinned = assign_vertices(rest_mesh, model.skinning(), model.store());
  b.skeleton = generate_skeleton(b.skinned, threshold);
  b.bones = model.bones();
  const MotionSequence seq = model.sequence();
  for (int i = 0; i < seq.bone_count(); ++i) b.rest_transforms.push_back(seq.rest_transform(i));
  b.metadata = {resolution, checkpoint_hash};
  quantize_bundle(b);
  // Dominant ids follow the stored (quantized) weights.
  for (std::size_t i = 0; i < b.skinned.dominant.size(); ++i)
    b.skinned.dominant[i] = static_cast<std::uint32_t>(
        dominant_bone(b.skinned.weights.row(static_cast<Eigen::Index>(i)).transpose()));
  b.skeleton = generate_skeleton(b.skinned, threshold);
  return b;
}

}  // namespace artic
