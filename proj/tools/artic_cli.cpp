// SPDX-License-Identifier: Apache-2.0
// Command-line driver: synth, fit, render, flow, mesh, skeleton, export-bundle, coverage.
#include <chrono>
#include <numbers>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "artic/checkpoint.hpp"
#include "artic/codec.hpp"
#include "artic/config.hpp"
#include "artic/dataset.hpp"
#include "artic/errors.hpp"
#include "artic/image_io.hpp"
#include "artic/mesh_skeleton.hpp"
#include "artic/pipeline.hpp"

using namespace artic;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitEmpty = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool print_config = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON configuration file");
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--out", c.out, "Output path");
  app->add_flag("--print-config", c.print_config, "Print the effective configuration and exit");
}

void need_checkpoint(const std::string& path) {
  if (path.empty()) throw ParseError("--checkpoint", "a checkpoint file is required");
}

// --out is checked after --print-config so that the dump works on its own.
void need_out(const Common& c) {
  if (c.out.empty()) throw ParseError("--out", "an output path is required");
}

template <typename T>
void load_config(const Common& c, T& cfg) {
  if (c.config.empty()) return;
  from_json(parse_json_document(read_file(c.config), c.config), cfg, "");
}

void print_config(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_image_set(const std::string& prefix, const RenderedImage& img, int w, int h) {
  write_ppm(prefix + ".rgb.ppm", w, h, img.color);
  write_gray_ppm(prefix + ".sil.ppm", w, h, img.opacity);
}

std::vector<float> flow_f32(const RenderedImage& img) {
  std::vector<float> out;
  out.reserve(img.flow.size() * 2);
  for (const Vec2& f : img.flow) {
    out.push_back(static_cast<float>(f.x()));
    out.push_back(static_cast<float>(f.y()));
  }
  return out;
}

// --- render settings shared by render / flow --------------------------------------

struct RenderOpts {
  std::string checkpoint;
  int frame = 0;
  std::optional<int> to;
  std::optional<double> azimuth, elevation;
  std::optional<double> radius;
};

RenderSettings render_settings(const Common& c) {
  RenderSettings s{64, 0.5, 5.5, SampleMode::midpoint, 4096};
  load_config(c, s);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Articulated shape reconstruction from sparse video frames"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::optional<int> synth_frames;
  auto* synth = app.add_subcommand("synth", "Render a synthetic two-part capsule dataset");
  add_common(synth, synth_c);
  synth->add_option("--frames", synth_frames, "Frame count");

  // fit
  Common fit_c;
  std::string fit_data, fit_trace;
  std::optional<int> fit_steps;
  std::optional<double> fit_lr;
  std::optional<int> fit_bones;
  std::optional<std::string> fit_prior;
  bool fit_toy = false;
  auto* fitc = app.add_subcommand("fit", "Fit a model to a dataset and write a checkpoint");
  add_common(fitc, fit_c);
  fitc->add_option("--data", fit_data, "Dataset directory");
  fitc->add_option("--trace", fit_trace, "Loss trace output (JSON lines)");
  fitc->add_option("--steps", fit_steps, "Optimization steps");
  fitc->add_option("--lr", fit_lr, "Adam learning rate");
  fitc->add_option("--bones", fit_bones, "Bone count");
  fitc->add_option("--prior", fit_prior, "Distillation prior: none or mock");
  fitc->add_flag("--toy", fit_toy, "Start from the toy-scene defaults");

  // render / flow
  Common render_c, flow_c;
  RenderOpts render_o, flow_o;
  auto* render = app.add_subcommand("render", "Render a training or novel view");
  add_common(render, render_c);
  render->add_option("--checkpoint", render_o.checkpoint, "Checkpoint file");
  render->add_option("--frame", render_o.frame, "Frame index");
  render->add_option("--to", render_o.to, "Also write flow to this frame");
  render->add_option("--azimuth", render_o.azimuth, "Novel view azimuth, degrees");
  render->add_option("--elevation", render_o.elevation, "Novel view elevation, degrees");
  render->add_option("--radius", render_o.radius, "Novel view orbit radius");
  auto* flow = app.add_subcommand("flow", "Render the flow between two frames");
  add_common(flow, flow_c);
  flow->add_option("--checkpoint", flow_o.checkpoint, "Checkpoint file");
  flow->add_option("--frame", flow_o.frame, "Source frame");
  flow->add_option("--to", flow_o.to, "Target frame");

  // mesh
  Common mesh_c;
  std::string mesh_ckpt, mesh_bundle, mesh_pose;
  std::optional<int> mesh_frame;
  int mesh_res = 128;
  auto* mesh = app.add_subcommand("mesh", "Extract the rest mesh, or a posed mesh, as OBJ");
  add_common(mesh, mesh_c);
  mesh->add_option("--checkpoint", mesh_ckpt, "Checkpoint file");
  mesh->add_option("--bundle", mesh_bundle, "Pose the mesh of this bundle instead");
  mesh->add_option("--resolution", mesh_res, "Grid samples per axis");
  mesh->add_option("--frame", mesh_frame, "Deform to the fitted pose of this frame");
  mesh->add_option("--pose", mesh_pose, "Deform with the bone transforms of a pose.json");

  // skeleton / export-bundle
  Common skel_c, bundle_c;
  std::string skel_ckpt, bundle_ckpt;
  int skel_res = 128, bundle_res = 128;
  std::uint64_t skel_thr = 3, bundle_thr = 3;
  auto* skel = app.add_subcommand("skeleton", "Generate the bone connectivity of a checkpoint");
  add_common(skel, skel_c);
  skel->add_option("--checkpoint", skel_ckpt, "Checkpoint file");
  skel->add_option("--resolution", skel_res, "Grid samples per axis");
  skel->add_option("--threshold", skel_thr, "Minimum shared mesh edges per bone pair");
  auto* bundle = app.add_subcommand("export-bundle", "Write the articulated bundle of a checkpoint");
  add_common(bundle, bundle_c);
  bundle->add_option("--checkpoint", bundle_ckpt, "Checkpoint file");
  bundle->add_option("--resolution", bundle_res, "Grid samples per axis");
  bundle->add_option("--threshold", bundle_thr, "Minimum shared mesh edges per bone pair");

  // coverage
  Common cov_c;
  std::string cov_ckpt;
  auto* cov = app.add_subcommand("coverage", "Azimuth coverage of the fitted cameras");
  add_common(cov, cov_c);
  cov->add_option("--checkpoint", cov_ckpt, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (synth->parsed()) {
      SceneSpec spec;
      load_config(synth_c, spec);
      if (synth_c.seed) spec.seed = *synth_c.seed;
      if (synth_frames) spec.frames = *synth_frames;
      if (synth_c.print_config) return print_config(to_json(spec)), 0;
      need_out(synth_c);
      spec.validate();
      synth_dataset(spec, synth_c.out);
      std::cout << "wrote " << spec.frames << " frames to " << synth_c.out << "\n";
    } else if (fitc->parsed()) {
      FitConfig cfg = fit_toy ? toy_fit_config() : FitConfig{};
      load_config(fit_c, cfg);
      if (fit_c.seed) cfg.seed = *fit_c.seed;
      if (fit_steps) cfg.steps = *fit_steps;
      if (fit_lr) cfg.adam.lr = *fit_lr;
      if (fit_bones) cfg.model.skinning.bones = *fit_bones;
      if (fit_prior) {
        json j{{"prior", *fit_prior}};
        from_json(j, cfg, "--prior");
      }
      if (fit_c.print_config) return print_config(to_json(cfg)), 0;
      need_out(fit_c);
      if (fit_data.empty()) throw ParseError("--data", "a dataset directory is required");
      cfg.validate();
      const Dataset ds = load_dataset(fit_data);
      std::ofstream trace;
      if (!fit_trace.empty()) {
        trace.open(fit_trace, std::ios::binary);
        if (!trace) throw Error("cannot open '" + fit_trace + "' for writing");
      }
      const auto start = std::chrono::steady_clock::now();
      const int report = std::max(cfg.steps / 20, 1);
      FitResult res = fit(ds.data, cfg, fit_trace.empty() ? nullptr : &trace,
                          [&](int step, const LossBreakdown& b) {
                            if ((step + 1) % report != 0) return;
                            const double s = std::chrono::duration<double>(
                                                 std::chrono::steady_clock::now() - start).count();
                            std::fprintf(stderr, "step %d/%d total %.6g (%.1fs)\n", step + 1,
                                         cfg.steps, b.total, s);
                          });
      save_checkpoint(*res.model, fit_c.out);
      if (ds.scene) {
        const IouReport iou = silhouette_iou(*res.model, ds.data, cfg.objective.render);
        std::cout << "silhouette IoU " << iou.mean << "\n";
      }
      std::cout << "wrote " << fit_c.out << "\n";
    } else if (render->parsed()) {
      const RenderSettings s = render_settings(render_c);
      if (render_c.print_config) return print_config(to_json(s)), 0;
      need_out(render_c);
      need_checkpoint(render_o.checkpoint);
      const auto model = load_checkpoint(render_o.checkpoint);
      std::optional<NovelView> novel;
      if (render_o.azimuth || render_o.elevation) {
        NovelView v;
        v.azimuth = render_o.azimuth.value_or(0.0) * std::numbers::pi / 180.0;
        v.elevation = render_o.elevation.value_or(0.0) * std::numbers::pi / 180.0;
        v.radius = render_o.radius.value_or(model->config().camera_distance);
        novel = v;
      }
      const int frames = model->config().frames;
      if (render_o.to && (*render_o.to < 0 || *render_o.to >= frames))
        throw FrameRangeError(*render_o.to, frames);
      const RenderedImage img =
          render_view(*model, render_o.frame, novel, s, render_o.to.value_or(-1));
      const ModelConfig& mc = model->config();
      write_image_set(render_c.out, img, mc.width, mc.height);
      if (render_o.to && !novel) write_f32(render_c.out + ".flow.f32", flow_f32(img));
      std::cout << "wrote " << render_c.out << ".rgb.ppm\n";
    } else if (flow->parsed()) {
      const RenderSettings s = render_settings(flow_c);
      if (flow_c.print_config) return print_config(to_json(s)), 0;
      need_out(flow_c);
      need_checkpoint(flow_o.checkpoint);
      if (!flow_o.to) throw ParseError("--to", "a target frame is required");
      const auto model = load_checkpoint(flow_o.checkpoint);
      const int frames = model->config().frames;
      if (*flow_o.to < 0 || *flow_o.to >= frames) throw FrameRangeError(*flow_o.to, frames);
      const RenderedImage img = render_view(*model, flow_o.frame, std::nullopt, s, *flow_o.to);
      write_f32(flow_c.out, flow_f32(img));
      std::cout << "wrote " << flow_c.out << "\n";
    } else if (mesh->parsed()) {
      if (mesh_c.print_config) return print_config({{"resolution", mesh_res}}), 0;
      need_out(mesh_c);
      if (mesh_ckpt.empty() == mesh_bundle.empty())
        throw ParseError("--checkpoint", "give exactly one of --checkpoint and --bundle");
      TriangleMesh out;
      if (!mesh_bundle.empty()) {
        const ArticulatedBundle b = import_bundle(mesh_bundle);
        if (mesh_pose.empty()) {
          out = b.skinned.mesh;
        } else {
          const PoseFile pose = parse_pose(read_file(mesh_pose), static_cast<int>(b.bones.size()));
          for (const auto& w : pose.warnings) std::cerr << "warning: " << w << "\n";
          out = pose_mesh(b.skinned, pose.transforms);
        }
      } else {
        const auto model = load_checkpoint(mesh_ckpt);
        out = extract_mesh(*model, mesh_res);
        if (out.empty()) {
          std::cerr << "empty mesh: the field has no zero crossing inside the grid\n";
          return kExitEmpty;
        }
        if (mesh_frame || !mesh_pose.empty()) {
          const SkinnedMesh sk = assign_vertices(out, model->skinning(), model->store());
          if (mesh_frame) {
            out = pose_mesh(sk, model->sequence(), *mesh_frame);
          } else {
            const PoseFile pose = parse_pose(read_file(mesh_pose), model->skinning().bone_count());
            for (const auto& w : pose.warnings) std::cerr << "warning: " << w << "\n";
            out = pose_mesh(sk, pose.transforms);
          }
        }
      }
      write_obj(mesh_c.out, out);
      std::cout << "wrote " << out.vertices.size() << " vertices, " << out.faces.size()
                << " faces to " << mesh_c.out << "\n";
    } else if (skel->parsed() || bundle->parsed()) {
      const bool is_bundle = bundle->parsed();
      const Common& c = is_bundle ? bundle_c : skel_c;
      const std::string& ckpt = is_bundle ? bundle_ckpt : skel_ckpt;
      const int res = is_bundle ? bundle_res : skel_res;
      const std::uint64_t thr = is_bundle ? bundle_thr : skel_thr;
      if (c.print_config) return print_config({{"resolution", res}, {"threshold", thr}}), 0;
      need_out(c);
      need_checkpoint(ckpt);
      const std::string text = read_file(ckpt);
      const auto model = parse_checkpoint(text);
      const TriangleMesh rest = extract_mesh(*model, res);
      if (rest.empty()) {
        std::cerr << "empty mesh: the field has no zero crossing inside the grid\n";
        return kExitEmpty;
      }
      const ArticulatedBundle b = build_bundle(*model, rest, res, thr, sha256_hex(text));
      if (is_bundle) {
        export_bundle(b, c.out);
        std::cout << "wrote " << c.out << "\n";
      } else {
        json edges = json::array();
        for (const auto& e : b.skeleton.edges) edges.push_back({{"a", e.a}, {"b", e.b}, {"count", e.count}});
        json centers = json::array();
        for (const auto& bone : b.bones)
          centers.push_back({bone.center.x(), bone.center.y(), bone.center.z()});
        const json j{{"threshold", thr}, {"bone_centers", centers}, {"edges", edges}};
        write_file(c.out, j.dump(2) + "\n");
        std::cout << "wrote " << b.skeleton.edges.size() << " edges to " << c.out << "\n";
        if (b.skeleton.edges.empty()) return kExitEmpty;
      }
    } else if (cov->parsed()) {
      if (cov_c.print_config) return print_config(json::object()), 0;
      need_checkpoint(cov_ckpt);
      const auto model = load_checkpoint(cov_ckpt);
      const AzimuthCoverage c = azimuth_coverage(*model);
      const json j{{"ratio", c.ratio}, {"bins", c.bins}, {"azimuth_deg", c.azimuth_deg}};
      if (!cov_c.out.empty()) write_file(cov_c.out, j.dump(2) + "\n");
      std::cout << "azimuth coverage " << c.ratio << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort in '" << e.term() << "': " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FrameRangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
