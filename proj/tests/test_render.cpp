// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "artic/errors.hpp"
#include "artic/model.hpp"
#include "artic/parallel.hpp"
#include "artic/render.hpp"
#include "support.hpp"

using namespace artic;
using artic::testing::random_transform;
using artic::testing::random_vec;

namespace {

const Intrinsics kK{100, 100, 64, 64};

Camera axis_camera() { return {RigidTransform::identity(), kK, 128, 128}; }

NeuralBone bone_at(const Vec3& c, double s = 0.3) {
  NeuralBone b;
  b.center = c;
  b.log_scales = Vec3::Constant(std::log(s));
  return b;
}

/// Static single-bone scene viewed from translate(0, 0, distance).
Articulation static_scene(int frames, double distance) {
  MotionSequence seq(frames, 1, kK, 128, 128);
  for (int t = 0; t < frames; ++t) seq.camera(t) = RigidTransform::translate(0, 0, distance);
  const std::vector<NeuralBone> bones{bone_at(Vec3::Zero())};
  return Articulation::build(seq, bones, 0.1);
}

}  // namespace

TEST_CASE("generate_ray examples") {
  const Camera cam = axis_camera();
  const Ray a = generate_ray(cam, {64, 64}, 0.5, 5.5);
  CHECK((a.direction - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK(a.origin.norm() == 0.0);
  const Camera wide(RigidTransform::identity(), kK, 256, 128);
  const Ray b = generate_ray(wide, {kK.cx + kK.fx, kK.cy}, 0.5, 5.5);
  CHECK((b.direction - Vec3(1, 0, 1).normalized()).norm() < 1e-15);
  const Camera back({Rotation::ry(std::numbers::pi), Vec3::Zero()}, kK, 128, 128);
  CHECK((generate_ray(back, {64, 64}, 0.5, 5.5).direction - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK_THROWS_AS(generate_ray(cam, {128, 3}, 0.5, 5.5), InvariantError);
  CHECK_THROWS_AS(generate_ray(cam, {-0.1, 3}, 0.5, 5.5), InvariantError);
  CHECK_THROWS_AS(generate_ray(cam, {3, 3}, 2.0, 1.0), InvariantError);
}

TEST_CASE("generate_ray origin is the camera center") {
  std::mt19937_64 rng(61);
  for (int i = 0; i < 20; ++i) {
    const RigidTransform pose = random_transform(rng, 2.0);
    const Camera cam(pose, kK, 128, 128);
    const Vec2 u(17.25, 99.5);
    const Ray r = generate_ray(cam, u, 0.5, 5.5);
    CHECK(pose.apply(r.origin).norm() < 1e-12);
    CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
    CHECK((project(cam, r.origin + 2.0 * r.direction) - u).norm() < 1e-9);
  }
}

TEST_CASE("sample_ray examples") {
  const Ray ray{Vec3::Zero(), Vec3::UnitZ(), 1.0, 3.0};
  const RaySampleSet one = sample_ray(ray, 1, 5);
  REQUIRE(one.depths.size() == 1);
  CHECK(one.intervals[0] == 2.0);
  CHECK(one.depths[0] >= 1.0);
  CHECK(one.depths[0] < 3.0);
  const RaySampleSet mid = sample_ray(ray, 4, 0, SampleMode::midpoint);
  const double expected[] = {1.25, 1.75, 2.25, 2.75};
  for (int i = 0; i < 4; ++i) {
    CHECK(mid.depths[i] == expected[i]);
    CHECK(mid.intervals[i] == doctest::Approx(0.5));
    CHECK((mid.positions[i] - Vec3(0, 0, expected[i])).norm() == 0.0);
  }
  const RaySampleSet a = sample_ray(ray, 16, 99), b = sample_ray(ray, 16, 99);
  CHECK(a.depths == b.depths);
  CHECK(a.intervals == b.intervals);
  CHECK(sample_ray(ray, 16, 100).depths != a.depths);
  CHECK_THROWS_AS(sample_ray(ray, 0, 1), InvariantError);
}

TEST_CASE("stratified samples are increasing with one per stratum") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const Ray ray{Vec3::Zero(), Vec3::UnitX(), 0.5, 5.5};
    const RaySampleSet s = sample_ray(ray, n, rng());
    const double h = 5.0 / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(s.depths[i] >= 0.5 + i * h);
      CHECK(s.depths[i] < 0.5 + (i + 1) * h);
      CHECK(s.intervals[i] > 0.0);
      if (i) CHECK(s.depths[i] > s.depths[i - 1]);
      sum += s.intervals[i];
    }
    CHECK(sum == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("composite examples") {
  RaySampleSet s = sample_ray({Vec3::Zero(), Vec3::UnitZ(), 1, 2}, 5, 3);
  const Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Constant(3, 5, 0.7);
  const std::vector<double> zero(5, 0.0);
  const RenderedPixel e = composite(s, zero, colors, Eigen::MatrixXd());
  CHECK(e.opacity == 0.0);
  CHECK(e.color.norm() == 0.0);

  RaySampleSet single = sample_ray({Vec3::Zero(), Vec3::UnitZ(), 1, 2}, 1, 3);
  const std::vector<double> ln2{std::log(2.0)};
  const RenderedPixel p = composite(single, ln2, Eigen::Matrix3Xd::Ones(3, 1), Eigen::MatrixXd::Ones(2, 1));
  CHECK(single.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.opacity == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.feature.size() == 2);
  CHECK(p.feature[1] == doctest::Approx(0.5));
  const std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(composite(single, neg, Eigen::Matrix3Xd::Ones(3, 1), Eigen::MatrixXd()),
                  InvariantError);
}

TEST_CASE("constant density opacity is partition invariant") {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double sigma = 0.1 + 3.0 * u(rng), length = 0.5 + 2.0 * u(rng);
    const int n = 2 + static_cast<int>(rng() % 60);
    std::vector<double> cuts{0.0, length};
    for (int i = 0; i + 1 < n; ++i) cuts.push_back(length * u(rng));
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> delta, dens, tau(n), trans(n);
    for (int i = 0; i < n; ++i) {
      delta.push_back(cuts[i + 1] - cuts[i]);
      dens.push_back(sigma);
    }
    composite_weights(dens.data(), delta.data(), n, tau.data(), trans.data());
    double o = 0.0;
    for (double t : tau) o += t;
    const double closed = -std::expm1(-sigma * length);
    CHECK(std::abs(o - closed) < 1e-12);
  }
}

TEST_CASE("opacity stays in bounds for random densities") {
  std::mt19937_64 rng(64);
  std::exponential_distribution<double> e(0.5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    std::vector<double> dens(n), delta(n), tau(n), trans(n);
    for (int i = 0; i < n; ++i) {
      dens[i] = trial % 3 ? e(rng) : e(rng) * 1e3;
      delta[i] = 0.01 + e(rng) * 0.1;
    }
    composite_weights(dens.data(), delta.data(), n, tau.data(), trans.data());
    double o = 0.0;
    for (double t : tau) {
      CHECK(t >= 0.0);
      o += t;
    }
    CHECK(o <= 1.0 + 1e-9);
  }
}

TEST_CASE("composite weight gradient matches finite differences") {
  std::mt19937_64 rng(65);
  const int n = 12;
  std::vector<double> dens(n), delta(n), g(n), tau(n), trans(n), gd(n);
  for (int i = 0; i < n; ++i) {
    dens[i] = std::uniform_real_distribution<>(0, 4)(rng);
    delta[i] = std::uniform_real_distribution<>(0.05, 0.3)(rng);
    g[i] = std::normal_distribution<>()(rng);
  }
  auto loss = [&] {
    std::vector<double> t(n), tr(n);
    composite_weights(dens.data(), delta.data(), n, t.data(), tr.data());
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += g[i] * t[i];
    return s;
  };
  composite_weights(dens.data(), delta.data(), n, tau.data(), trans.data());
  composite_weights_vjp(delta.data(), tau.data(), trans.data(), g.data(), n, gd.data());
  for (int i = 0; i < n; ++i)
    CHECK(artic::testing::grad_close(gd[i], artic::testing::central_difference(loss, dens[i], 1e-6),
                                     1e-6, 1e-6, 1e-9));
}

TEST_CASE("sphere silhouette matches the ray-sphere oracle") {
  const double radius = 0.5, distance = 3.0;
  const AnalyticField field(AnalyticShape::sphere(Vec3::Zero(), radius), 4, 0.01);
  const Articulation art = static_scene(1, distance);
  ParameterStore store;
  RenderSettings rs;
  rs.samples = 64;
  rs.near = 1.0;
  rs.far = 5.0;
  RayRenderer renderer(field, store, art, kK, rs);
  const Camera cam(RigidTransform::identity(), {60, 60, 16, 16}, 32, 32);
  const RenderedImage img = render_image(renderer, cam, 0, FieldQuery{false, false}, -1, 11);
  const Vec3 center(0, 0, distance);
  std::size_t checked = 0;
  double worst = 0.0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const Ray r = generate_ray(cam, pixel_center(x, y), rs.near, rs.far);
      // distance from the center to the ray line; hit iff below the radius
      const double miss = (center - center.dot(r.direction) * r.direction).norm();
      if (std::abs(miss - radius) < 0.05) continue;
      const double expected = miss < radius ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(img.opacity[y * 32 + x] - expected));
      ++checked;
    }
  CHECK(checked > 500);
  CHECK(worst < 0.05);
}

TEST_CASE("camera looking away sees nothing") {
  const AnalyticField field(AnalyticShape::sphere(Vec3::Zero(), 0.5), 4, 0.01);
  const Articulation art = static_scene(1, 3.0);
  ParameterStore store;
  const Camera away({Rotation::ry(std::numbers::pi), Vec3::Zero()}, kK, 128, 128);
  const RenderedPixel p = render_pixel(field, store, art, away, {64, 64}, 0, RenderSettings{});
  CHECK(p.opacity < 1e-3);
  const RenderedPixel hit = render_pixel(field, store, art, axis_camera(), {64, 64}, 0, RenderSettings{});
  CHECK(hit.opacity > 0.99);
}

TEST_CASE("rendering is reproducible") {
  const AnalyticField field(AnalyticShape::capsule({-0.4, 0, 0}, {0.4, 0, 0}, 0.2), 3, 0.05);
  const Articulation art = static_scene(1, 3.0);
  ParameterStore store;
  RenderSettings rs;
  rs.samples = 24;
  RayRenderer renderer(field, store, art, kK, rs);
  const Camera cam(RigidTransform::identity(), {40, 40, 12, 12}, 24, 24);
  const int workers = worker_count();
  set_worker_count(1);
  const RenderedImage a = render_image(renderer, cam, 0, FieldQuery{}, -1, 5);
  set_worker_count(3);
  const RenderedImage b = render_image(renderer, cam, 0, FieldQuery{}, -1, 5);
  set_worker_count(workers);
  for (std::size_t i = 0; i < a.opacity.size(); ++i) {
    CHECK(std::memcmp(&a.opacity[i], &b.opacity[i], sizeof(double)) == 0);
    CHECK(std::memcmp(a.color[i].data(), b.color[i].data(), 3 * sizeof(double)) == 0);
    CHECK(std::memcmp(a.feature[i].data(), b.feature[i].data(), 3 * sizeof(double)) == 0);
  }
}

TEST_CASE("flow vanishes for identical frames") {
  const AnalyticField field(AnalyticShape::sphere(Vec3::Zero(), 0.5), 4, 0.02);
  MotionSequence seq(2, 1, kK, 128, 128);
  std::mt19937_64 rng(66);
  seq.camera(0) = compose(RigidTransform::translate(0, 0, 3), random_transform(rng, 0.1));
  seq.camera(1) = seq.camera(0);
  seq.frame_transform(0, 0) = random_transform(rng, 0.2);
  const std::vector<NeuralBone> bones{bone_at(Vec3::Zero())};
  const Articulation art = Articulation::build(seq, bones, 0.1);
  ParameterStore store;
  for (const Vec2& u : {Vec2(64, 64), Vec2(50.5, 70.5), Vec2(3.5, 4.5)}) {
    const Vec2 f = render_flow(field, store, art, kK, u, 0, 0, RenderSettings{});
    CHECK(f.norm() < 1e-6);
  }
}

namespace {

/// Large slab whose front face is the canonical plane z = 0.
AnalyticField slab() {
  return AnalyticField(AnalyticShape::box(Vec3(0, 0, 0.25), Vec3(3, 3, 0.25)), 2, 0.005);
}

double plane_flow_oracle(const Articulation& art, const AnalyticField& field, const Vec2& u,
                         const RenderSettings& rs, int t, int t2) {
  // Independent evaluation: march the ray, composite by hand, warp each sample by hand.
  const Vec3 dir = Vec3((u.x() - kK.cx) / kK.fx, (u.y() - kK.cy) / kK.fy, 1.0).normalized();
  RaySampleSet s = sample_ray({Vec3::Zero(), dir, rs.near, rs.far}, rs.samples, 0, SampleMode::midpoint);
  ParameterStore store;
  std::vector<double> dens;
  std::vector<Vec2> proj;
  for (const Vec3& w : s.positions) {
    const Vec3 v = warp_backward(art, w, t);
    dens.push_back(field.eval(store, v).density);
    const Vec3 w2 = warp_forward(art, v, t2);
    proj.push_back(project_camera_space(kK, w2));
  }
  composite(s, dens, Eigen::Matrix3Xd::Zero(3, s.positions.size()), Eigen::MatrixXd());
  double fx = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i) fx += s.weights[i] * (proj[i].x() - u.x());
  return fx;
}

}  // namespace

TEST_CASE("flow of a translated camera over a plane") {
  const double z = 3.0, b = 0.2;
  const AnalyticField field = slab();
  MotionSequence seq(2, 1, kK, 128, 128);
  seq.camera(0) = RigidTransform::translate(0, 0, z);
  seq.camera(1) = compose(RigidTransform::translate(-b, 0, 0), seq.camera(0));
  const std::vector<NeuralBone> bones{bone_at(Vec3::Zero())};
  const Articulation art = Articulation::build(seq, bones, 0.1);
  ParameterStore store;
  RenderSettings rs;
  rs.samples = 256;
  rs.mode = SampleMode::midpoint;
  const Vec2 u(60.5, 70.5);
  const Vec2 f = render_flow(field, store, art, kK, u, 0, 1, rs);
  CHECK(f.x() == doctest::Approx(-kK.fx * b / z).epsilon(0.02));
  CHECK(std::abs(f.y()) < 1e-9);
  CHECK(f.x() == doctest::Approx(plane_flow_oracle(art, field, u, rs, 0, 1)).epsilon(1e-9));
}

TEST_CASE("flow of a translating object over a fixed camera") {
  const double z = 3.0, dx = 0.15;
  const AnalyticField field = slab();
  MotionSequence seq(2, 1, kK, 128, 128);
  seq.camera(0) = seq.camera(1) = RigidTransform::translate(0, 0, z);
  seq.frame_transform(1, 0) = RigidTransform::translate(dx, 0, 0);
  const std::vector<NeuralBone> bones{bone_at(Vec3::Zero())};
  const Articulation art = Articulation::build(seq, bones, 0.1);
  ParameterStore store;
  RenderSettings rs;
  rs.samples = 256;
  rs.mode = SampleMode::midpoint;
  const Vec2 u(70.5, 50.5);
  const Vec2 f = render_flow(field, store, art, kK, u, 0, 1, rs);
  CHECK(f.x() == doctest::Approx(kK.fx * dx / z).epsilon(0.02));
  CHECK(f.x() == doctest::Approx(plane_flow_oracle(art, field, u, rs, 0, 1)).epsilon(1e-9));
}

TEST_CASE("flow behind the camera is degenerate") {
  const AnalyticField field(AnalyticShape::sphere(Vec3::Zero(), 0.5), 2, 0.02);
  MotionSequence seq(2, 1, kK, 128, 128);
  seq.camera(0) = RigidTransform::translate(0, 0, 3);
  seq.camera(1) = RigidTransform::translate(0, 0, -10);
  const std::vector<NeuralBone> bones{bone_at(Vec3::Zero())};
  const Articulation art = Articulation::build(seq, bones, 0.1);
  ParameterStore store;
  CHECK_THROWS_AS(render_flow(field, store, art, kK, {64, 64}, 0, 1, RenderSettings{}),
                  ProjectionError);
  CHECK_THROWS_AS(render_flow(field, store, art, kK, {64, 64}, 0, 2, RenderSettings{}),
                  FrameRangeError);
}

namespace {

ModelConfig tiny_model(bool delta) {
  ModelConfig cfg;
  cfg.field.sdf = {2, {8, 8}, 1, 1, OutputActivation::linear, 10.0};
  cfg.field.color = {2, {6}, -1, 3, OutputActivation::sigmoid, 10.0};
  cfg.field.feature = {1, {5}, -1, 2, OutputActivation::linear, 10.0};
  cfg.field.init_log_beta = std::log(0.2);
  cfg.skinning.bones = 2;
  cfg.skinning.temperature = 0.3;
  cfg.skinning.delta = delta;
  cfg.skinning.delta_net = {1, {4}, -1, 2, OutputActivation::linear, 5.0};
  cfg.frames = 3;
  cfg.intrinsics = {10, 10, 4, 4};
  cfg.width = cfg.height = 8;
  return cfg;
}

void perturb_motion(ArticulatedModel& m, std::mt19937_64& rng) {
  MotionSequence seq = m.sequence();
  for (int t = 0; t < seq.frame_count(); ++t) {
    for (int b = 0; b < seq.bone_count(); ++b)
      seq.frame_transform(t, b) = {Rotation::from_axis_angle(random_vec(rng), 0.3), random_vec(rng, 0.1)};
    seq.camera(t) = compose(seq.camera(t), {Rotation::from_axis_angle(random_vec(rng), 0.1),
                                             random_vec(rng, 0.1)});
  }
  for (int b = 0; b < seq.bone_count(); ++b)
    seq.rest_transform(b) = {Rotation::from_axis_angle(random_vec(rng), 0.2), random_vec(rng, 0.1)};
  m.motion().write(m.store(), seq);
}

}  // namespace

TEST_CASE("renderer gradients match finite differences") {
  for (bool delta : {false, true}) {
    ArticulatedModel model(tiny_model(delta));
    model.initialize(71);
    std::mt19937_64 rng(72);
    perturb_motion(model, rng);
    if (delta) model.skinning().delta_net()->init_random(model.store(), rng, 0.5);
    RenderSettings rs;
    rs.samples = 8;
    rs.near = 2.2;
    rs.far = 3.8;
    rs.chunk_samples = 16;
    std::vector<RayQuery> rays;
    std::vector<RayUpstream> ups;
    for (int i = 0; i < 6; ++i) {
      const Vec2 u(1.5 + (i * 7) % 5, 2.5 + (i * 3) % 4);
      const Vec3 dir = Vec3((u.x() - 4) / 10.0, (u.y() - 4) / 10.0, 1.0).normalized();
      rays.push_back({Vec3::Zero(), dir, u, i % 3, (i + 1) % 3, i % 2 == 0, static_cast<std::uint64_t>(i)});
      RayUpstream up;
      up.color = random_vec(rng);
      up.opacity = std::normal_distribution<>()(rng);
      up.feature = Eigen::VectorXd::Random(2);
      up.flow = Vec2::Random() * 0.1;
      up.cycle = std::normal_distribution<>()(rng);
      ups.push_back(up);
    }
    auto loss = [&] {
      const Articulation art = model.articulation();
      RayRenderer r(model.field(), model.store(), art, model.config().intrinsics, rs);
      std::vector<RayOutput> out(rays.size());
      r.render(rays, FieldQuery{}, out);
      double s = 0.0;
      for (std::size_t i = 0; i < rays.size(); ++i) {
        s += ups[i].color.dot(out[i].color) + ups[i].opacity * out[i].opacity +
             ups[i].feature.dot(out[i].feature) + ups[i].flow.dot(out[i].flow) +
             ups[i].cycle * out[i].cycle;
      }
      return s;
    };
    const Articulation art = model.articulation();
    RayRenderer r(model.field(), model.store(), art, model.config().intrinsics, rs);
    std::vector<RayOutput> out(rays.size());
    Gradient grad;
    ArticulationGrad ag(art.frames, art.bones);
    r.render_backward(rays, FieldQuery{}, [&](std::size_t i, const RayOutput&) { return ups[i]; },
                      out, grad, ag);
    for (const auto& o : out) CHECK(o.flow_valid);
    model.scatter(ag, grad);
    const auto res = artic::testing::check_gradient(model.store(), loss, grad,
                                                    artic::testing::all_indices(model.store().size()),
                                                    1e-6, 1e-3, 1e-5, 1e-8);
    INFO("worst " << res.worst);
    CHECK(res.failed == 0);
  }
}
