// SPDX-License-Identifier: Apache-2.0
#include "artic/render.hpp"

#include <algorithm>
#include <cmath>

#include "artic/errors.hpp"
#include "artic/parallel.hpp"

namespace artic {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t ray_seed(std::uint64_t base, int frame, int x, int y, std::uint64_t iteration) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ static_cast<std::uint64_t>(frame));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32 |
                      static_cast<std::uint32_t>(y)));
  return splitmix64(h ^ iteration);
}

Ray generate_ray(const Camera& cam, const Vec2& u, double near, double far) {
  if (!(u.x() >= 0.0 && u.x() < cam.width() && u.y() >= 0.0 && u.y() < cam.height()))
    throw InvariantError("pixel (" + std::to_string(u.x()) + ", " + std::to_string(u.y()) +
                         ") outside the image");
  if (!(near > 0.0 && near < far)) throw InvariantError("ray bounds need 0 < near < far");
  const Intrinsics& k = cam.intrinsics();
  const Vec3 dc = Vec3((u.x() - k.cx) / k.fx, (u.y() - k.cy) / k.fy, 1.0).normalized();
  const Mat3 rt = cam.pose().rotation.matrix().transpose();
  return {-(rt * cam.pose().translation), rt * dc, near, far};
}

void sample_depths(double near, double far, int n, std::uint64_t seed, SampleMode mode,
                   double* depths, double* intervals) {
  const double h = (far - near) / n;
  std::uint64_t state = seed;
  for (int i = 0; i < n; ++i) {
    double jitter = 0.5;
    if (mode == SampleMode::jittered) {
      state = splitmix64(state);
      jitter = static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    depths[i] = near + (i + jitter) * h;
  }
  double lo = near;
  for (int i = 0; i < n; ++i) {
    const double hi = i + 1 < n ? 0.5 * (depths[i] + depths[i + 1]) : far;
    intervals[i] = hi - lo;
    lo = hi;
  }
}

RaySampleSet sample_ray(const Ray& ray, int n, std::uint64_t seed, SampleMode mode) {
  if (n < 1) throw InvariantError("sample_ray needs n >= 1");
  RaySampleSet s;
  s.depths.resize(n);
  s.intervals.resize(n);
  sample_depths(ray.near, ray.far, n, seed, mode, s.depths.data(), s.intervals.data());
  s.positions.reserve(n);
  for (double d : s.depths) s.positions.push_back(ray.origin + d * ray.direction);
  return s;
}

void composite_weights(const double* density, const double* intervals, int n, double* tau,
                       double* transmittance) {
  double trans = 1.0;
  for (int i = 0; i < n; ++i) {
    const double keep = std::exp(-density[i] * intervals[i]);
    transmittance[i] = trans;
    tau[i] = trans * (1.0 - keep);
    trans *= keep;
  }
}

void composite_weights_vjp(const double* intervals, const double* tau, const double* transmittance,
                           const double* g_tau, int n, double* g_density) {
  double tail = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    const double t_next = transmittance[k] - tau[k];
    g_density[k] = intervals[k] * (g_tau[k] * t_next - tail);
    tail += g_tau[k] * tau[k];
  }
}

RenderedPixel composite(RaySampleSet& samples, std::span<const double> density,
                        const Eigen::Matrix3Xd& colors, const Eigen::MatrixXd& features) {
  const int n = static_cast<int>(samples.intervals.size());
  if (static_cast<int>(density.size()) != n || colors.cols() != n ||
      (features.rows() > 0 && features.cols() != n))
    throw InvariantError("composite: sample arrays differ in length");
  for (double s : density)
    if (!(s >= 0.0)) throw InvariantError("composite: densities must be non-negative");
  std::vector<double> trans(n);
  samples.weights.resize(n);
  composite_weights(density.data(), samples.intervals.data(), n, samples.weights.data(),
                    trans.data());
  RenderedPixel p;
  p.feature = Eigen::VectorXd::Zero(features.rows());
  for (int i = 0; i < n; ++i) {
    const double t = samples.weights[i];
    p.opacity += t;
    p.color += t * colors.col(i);
    if (features.rows() > 0) p.feature += t * features.col(i);
  }
  return p;
}

// ---- batched renderer -------------------------------------------------------

struct RayRenderer::Chunk {
  std::span<const RayQuery> rays;
  std::span<RayOutput> out;
  int n = 0;
  Eigen::Index ns = 0;
  bool need_forward_warp = false;
  std::vector<double> intervals, tau, trans;
  Eigen::Matrix3Xd w, x, v;
  Eigen::MatrixXd logits_bw, logits_fw;
  MlpTape tape_bw, tape_fw;
  FieldBatch field;
  FieldTape field_tape;
  Eigen::Matrix3Xd xf, wf, xc, wc;
  Eigen::Matrix2Xd uf;
  std::vector<std::uint8_t> flow_ok;
  Eigen::VectorXd err;
};

RayRenderer::RayRenderer(const CanonicalField& field, const ParameterStore& store,
                         const Articulation& articulation, const Intrinsics& k,
                         RenderSettings settings)
    : field_(field), store_(store), art_(articulation), k_(k), settings_(settings) {
  if (settings_.samples < 1) throw InvariantError("renderer needs at least one sample per ray");
  if (!(settings_.near > 0.0 && settings_.near < settings_.far))
    throw InvariantError("renderer needs 0 < near < far");
  if (art_.delta_net && art_.delta_store != &store_)
    throw InvariantError("delta network must share the renderer's parameter store");
}

std::size_t RayRenderer::rays_per_chunk() const {
  return static_cast<std::size_t>(std::max(1, settings_.chunk_samples / settings_.samples));
}

void RayRenderer::forward_chunk(Chunk& c, const FieldQuery& query, bool record) const {
  const int n = settings_.samples;
  const auto nr = static_cast<Eigen::Index>(c.rays.size());
  c.n = n;
  c.ns = nr * n;
  c.intervals.resize(c.ns);
  c.tau.resize(c.ns);
  c.trans.resize(c.ns);
  c.w.resize(3, c.ns);
  c.x.resize(3, c.ns);
  c.v.resize(3, c.ns);
  c.need_forward_warp = false;
  std::vector<double> depth(n);
  for (Eigen::Index r = 0; r < nr; ++r) {
    const RayQuery& q = c.rays[r];
    art_.check_frame(q.frame);
    if (q.flow_frame >= 0) art_.check_frame(q.flow_frame);
    c.need_forward_warp |= q.flow_frame >= 0 || q.cycle;
    sample_depths(settings_.near, settings_.far, n, q.seed, settings_.mode, depth.data(),
                  c.intervals.data() + r * n);
    for (int i = 0; i < n; ++i) {
      const Eigen::Index s = r * n + i;
      c.w.col(s) = q.origin + depth[i] * q.direction;
      c.x.col(s) = camera_unapply(art_, q.frame, c.w.col(s));
    }
  }
  const bool delta = art_.delta_net != nullptr;
  if (delta) c.logits_bw = art_.delta_net->forward(store_, c.x, record ? &c.tape_bw : nullptr);
  for (Eigen::Index s = 0; s < c.ns; ++s)
    c.v.col(s) = deform_backward_point(art_, c.x.col(s), c.rays[s / n].frame,
                                       delta ? c.logits_bw.col(s).data() : nullptr, nullptr);
  field_.evaluate(store_, c.v, query, c.field, record ? &c.field_tape : nullptr);
  if (c.need_forward_warp && delta)
    c.logits_fw = art_.delta_net->forward(store_, c.v, record ? &c.tape_fw : nullptr);

  c.xf.resize(3, c.ns);
  c.wf.resize(3, c.ns);
  c.uf.resize(2, c.ns);
  c.flow_ok.assign(c.ns, 0);
  c.xc.resize(3, c.ns);
  c.wc.resize(3, c.ns);
  c.err = Eigen::VectorXd::Zero(c.ns);
  const bool color = c.field.color.cols() == c.ns;
  const bool feature = c.field.feature.cols() == c.ns && c.field.feature.rows() > 0;

  for (Eigen::Index r = 0; r < nr; ++r) {
    const RayQuery& q = c.rays[r];
    const Eigen::Index base = r * n;
    composite_weights(c.field.density.data() + base, c.intervals.data() + base, n,
                      c.tau.data() + base, c.trans.data() + base);
    RayOutput& o = c.out[r];
    o = RayOutput{};
    o.feature = Eigen::VectorXd::Zero(feature ? c.field.feature.rows() : 0);
    for (int i = 0; i < n; ++i) {
      const Eigen::Index s = base + i;
      const double t = c.tau[s];
      o.opacity += t;
      if (color) o.color += t * c.field.color.col(s);
      if (feature) o.feature += t * c.field.feature.col(s);
      const double* lf = delta && c.need_forward_warp ? c.logits_fw.col(s).data() : nullptr;
      if (q.flow_frame >= 0) {
        c.xf.col(s) = deform_forward_point(art_, c.v.col(s), q.flow_frame, lf, nullptr);
        c.wf.col(s) = camera_apply(art_, q.flow_frame, c.xf.col(s));
        if (c.wf(2, s) > kProjectionMinDepth) {
          c.flow_ok[s] = 1;
          c.uf.col(s) = project_camera_space(k_, c.wf.col(s));
          o.flow += t * (c.uf.col(s) - q.pixel);
          o.flow_valid = true;
        }
      }
      if (q.cycle) {
        c.xc.col(s) = deform_forward_point(art_, c.v.col(s), q.frame, lf, nullptr);
        c.wc.col(s) = camera_apply(art_, q.frame, c.xc.col(s));
        c.err[s] = (c.w.col(s) - c.wc.col(s)).norm();
        o.cycle += t * c.err[s];
      }
    }
  }
}

void RayRenderer::backward_chunk(Chunk& c, std::span<const RayUpstream> up, std::span<double> grad,
                                 ArticulationGrad& agrad) const {
  const int n = c.n;
  const auto nr = static_cast<Eigen::Index>(c.rays.size());
  const bool color = c.field.color.cols() == c.ns;
  const bool feature = c.field.feature.cols() == c.ns && c.field.feature.rows() > 0;
  const bool delta = art_.delta_net != nullptr;

  std::vector<double> g_tau(c.ns, 0.0);
  FieldBatchGrad fg;
  fg.density.resize(c.ns);
  if (color) fg.color.setZero(3, c.ns);
  if (feature) fg.feature.setZero(c.field.feature.rows(), c.ns);
  for (Eigen::Index r = 0; r < nr; ++r) {
    const RayQuery& q = c.rays[r];
    const RayUpstream& u = up[r];
    const bool gf = feature && u.feature.size() == c.field.feature.rows();
    for (int i = 0; i < n; ++i) {
      const Eigen::Index s = r * n + i;
      double g = u.opacity;
      if (color) {
        g += u.color.dot(c.field.color.col(s));
        fg.color.col(s) = c.tau[s] * u.color;
      }
      if (gf) {
        g += u.feature.dot(c.field.feature.col(s));
        fg.feature.col(s) = c.tau[s] * u.feature;
      }
      if (q.flow_frame >= 0 && c.flow_ok[s]) g += u.flow.dot(c.uf.col(s) - q.pixel);
      if (q.cycle) g += u.cycle * c.err[s];
      g_tau[s] = g;
    }
    composite_weights_vjp(c.intervals.data() + r * n, c.tau.data() + r * n,
                          c.trans.data() + r * n, g_tau.data() + r * n, n,
                          fg.density.data() + r * n);
  }

  Eigen::Matrix3Xd g_v;
  field_.backward(store_, c.field_tape, fg, grad, &g_v);
  if (g_v.cols() != c.ns) g_v.setZero(3, c.ns);

  if (c.need_forward_warp) {
    Eigen::MatrixXd g_lf;
    if (delta) g_lf.setZero(art_.bones, c.ns);
    for (Eigen::Index r = 0; r < nr; ++r) {
      const RayQuery& q = c.rays[r];
      const RayUpstream& u = up[r];
      for (int i = 0; i < n; ++i) {
        const Eigen::Index s = r * n + i;
        const double* lf = delta ? c.logits_fw.col(s).data() : nullptr;
        double* glf = delta ? g_lf.col(s).data() : nullptr;
        Vec3 gv = Vec3::Zero();
        if (q.flow_frame >= 0 && c.flow_ok[s] && !u.flow.isZero(0.0)) {
          const Vec3 g_wf = project_vjp(k_, c.wf.col(s), c.tau[s] * u.flow);
          const Vec3 g_xf = camera_apply_vjp(art_, q.flow_frame, c.xf.col(s), g_wf, agrad);
          deform_forward_vjp(art_, c.v.col(s), q.flow_frame, lf, g_xf, agrad, gv, glf);
        }
        if (q.cycle && u.cycle != 0.0 && c.err[s] > 0.0) {
          const Vec3 g_wc = -(c.tau[s] * u.cycle / c.err[s]) * (c.w.col(s) - c.wc.col(s));
          const Vec3 g_xc = camera_apply_vjp(art_, q.frame, c.xc.col(s), g_wc, agrad);
          deform_forward_vjp(art_, c.v.col(s), q.frame, lf, g_xc, agrad, gv, glf);
        }
        g_v.col(s) += gv;
      }
    }
    if (delta) {
      Eigen::Matrix3Xd g_vd;
      art_.delta_net->backward(store_, c.tape_fw, g_lf, grad, &g_vd);
      g_v += g_vd;
    }
  }

  Eigen::Matrix3Xd g_x = Eigen::Matrix3Xd::Zero(3, c.ns);
  Eigen::MatrixXd g_lb;
  if (delta) g_lb.setZero(art_.bones, c.ns);
  for (Eigen::Index s = 0; s < c.ns; ++s) {
    Vec3 gx = Vec3::Zero();
    deform_backward_vjp(art_, c.x.col(s), c.rays[s / n].frame,
                        delta ? c.logits_bw.col(s).data() : nullptr, g_v.col(s), agrad, gx,
                        delta ? g_lb.col(s).data() : nullptr);
    g_x.col(s) = gx;
  }
  if (delta) {
    Eigen::Matrix3Xd g_xd;
    art_.delta_net->backward(store_, c.tape_bw, g_lb, grad, &g_xd);
    g_x += g_xd;
  }
  for (Eigen::Index s = 0; s < c.ns; ++s)
    camera_unapply_vjp(art_, c.rays[s / n].frame, c.w.col(s), g_x.col(s), agrad);
}

void RayRenderer::render(std::span<const RayQuery> rays, const FieldQuery& query,
                         std::span<RayOutput> out) const {
  if (out.size() != rays.size()) throw InvariantError("render: output span size mismatch");
  const std::size_t per = rays_per_chunk();
  const std::size_t chunks = (rays.size() + per - 1) / per;
  parallel_for(chunks, [&](std::size_t ci) {
    const std::size_t begin = ci * per, count = std::min(per, rays.size() - begin);
    Chunk c;
    c.rays = rays.subspan(begin, count);
    c.out = out.subspan(begin, count);
    forward_chunk(c, query, false);
  });
}

void RayRenderer::render_backward(std::span<const RayQuery> rays, const FieldQuery& query,
                                  const UpstreamFn& upstream, std::span<RayOutput> out,
                                  Gradient& grad, ArticulationGrad& agrad) const {
  if (out.size() != rays.size()) throw InvariantError("render: output span size mismatch");
  if (grad.size() != store_.size()) grad.assign(store_.size(), 0.0);
  const std::size_t per = rays_per_chunk();
  const std::size_t chunks = (rays.size() + per - 1) / per;
  std::vector<Gradient> grads(chunks);
  std::vector<ArticulationGrad> agrads(chunks);
  parallel_for(chunks, [&](std::size_t ci) {
    const std::size_t begin = ci * per, count = std::min(per, rays.size() - begin);
    Chunk c;
    c.rays = rays.subspan(begin, count);
    c.out = out.subspan(begin, count);
    forward_chunk(c, query, true);
    std::vector<RayUpstream> up(count);
    for (std::size_t r = 0; r < count; ++r) up[r] = upstream(begin + r, c.out[r]);
    grads[ci].assign(store_.size(), 0.0);
    agrads[ci] = ArticulationGrad(art_.frames, art_.bones);
    backward_chunk(c, up, grads[ci], agrads[ci]);
  });
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grads[ci][i];
    agrad += agrads[ci];
  }
}

// ---- convenience wrappers ---------------------------------------------------

RenderedPixel render_pixel(const CanonicalField& field, const ParameterStore& store,
                           const Articulation& art, const Camera& cam, const Vec2& u, int t,
                           const RenderSettings& settings, std::uint64_t seed) {
  art.check_frame(t);
  const Ray ray = generate_ray(cam, u, settings.near, settings.far);
  RayRenderer renderer(field, store, art, cam.intrinsics(), settings);
  RayQuery q{ray.origin, ray.direction, u, t, -1, false, seed};
  RayOutput o;
  renderer.render({&q, 1}, FieldQuery{}, {&o, 1});
  RenderedPixel p;
  p.color = o.color;
  p.opacity = o.opacity;
  p.feature = o.feature;
  return p;
}

Vec2 render_flow(const CanonicalField& field, const ParameterStore& store, const Articulation& art,
                 const Intrinsics& k, const Vec2& u, int t, int t_prime,
                 const RenderSettings& settings, std::uint64_t seed) {
  art.check_frame(t);
  art.check_frame(t_prime);
  const Vec3 dir = Vec3((u.x() - k.cx) / k.fx, (u.y() - k.cy) / k.fy, 1.0).normalized();
  RayRenderer renderer(field, store, art, k, settings);
  RayQuery q{Vec3::Zero(), dir, u, t, t_prime, false, seed};
  RayOutput o;
  renderer.render({&q, 1}, FieldQuery{false, false}, {&o, 1});
  if (!o.flow_valid) throw ProjectionError("degenerate flow: every warped sample is behind the camera");
  return o.flow;
}

RenderedImage render_image(const RayRenderer& renderer, const Camera& cam, int t,
                           const FieldQuery& query, int flow_frame, std::uint64_t seed) {
  const int w = cam.width(), h = cam.height();
  std::vector<RayQuery> rays;
  rays.reserve(static_cast<std::size_t>(w) * h);
  const auto& s = renderer.settings();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec2 u = pixel_center(x, y);
      const Ray ray = generate_ray(cam, u, s.near, s.far);
      rays.push_back({ray.origin, ray.direction, u, t, flow_frame, false,
                      ray_seed(seed, t, x, y, 0)});
    }
  std::vector<RayOutput> out(rays.size());
  renderer.render(rays, query, out);
  RenderedImage img;
  img.width = w;
  img.height = h;
  for (auto& o : out) {
    img.color.push_back(o.color);
    img.opacity.push_back(o.opacity);
    img.feature.push_back(std::move(o.feature));
    img.flow.push_back(o.flow);
    img.flow_valid.push_back(o.flow_valid ? 1 : 0);
  }
  return img;
}

}  // namespace artic
