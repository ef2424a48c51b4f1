// SPDX-License-Identifier: Apache-2.0
#include "artic/mesh_skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "artic/codec.hpp"
#include "artic/errors.hpp"
#include "artic/parallel.hpp"

namespace artic {

using nlohmann::json;

// ---- mesh ---------------------------------------------------------------------

void TriangleMesh::validate() const {
  const auto n = vertices.size();
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (auto i : t)
      if (i >= n) throw InvariantError("face " + std::to_string(f) + " has an out-of-range index");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw InvariantError("face " + std::to_string(f) + " is degenerate");
  }
  if (!colors.empty() && colors.size() != n)
    throw InvariantError("vertex color count does not match the vertex count");
}

namespace {

std::vector<std::pair<std::uint32_t, std::uint32_t>> unique_edges(const TriangleMesh& m) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
  e.reserve(m.faces.size() * 3);
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) {
      const auto a = f[k], b = f[(k + 1) % 3];
      e.emplace_back(std::min(a, b), std::max(a, b));
    }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

}  // namespace

std::size_t TriangleMesh::edge_count() const { return unique_edges(*this).size(); }

long TriangleMesh::euler_characteristic() const {
  return static_cast<long>(vertices.size()) - static_cast<long>(edge_count()) +
         static_cast<long>(faces.size());
}

double TriangleMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& f : faces)
    v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]])) / 6.0;
  return v;
}

// ---- marching cubes -------------------------------------------------------------
//
// Corner c of a cell sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1). The case table is built once
// from the faces of the cube: walking each face boundary counter-clockwise from outside, every run
// of inside corners is cut off by one segment from the crossing where the walk enters the inside
// to the crossing where it leaves. Ambiguous faces therefore always separate their inside corners,
// and both cells sharing a face agree on it. Segments chain into closed loops per cell.

namespace {

struct CubeEdge {
  int c0, axis;
};

struct CaseTable {
  std::array<CubeEdge, 12> edges;
  std::array<std::vector<std::vector<int>>, 256> loops;

  int edge_id(int a, int b) const {
    for (int e = 0; e < 12; ++e) {
      const int c1 = edges[e].c0 | (1 << edges[e].axis);
      if ((edges[e].c0 == a && c1 == b) || (edges[e].c0 == b && c1 == a)) return e;
    }
    throw InvariantError("not a cube edge");
  }

  CaseTable() {
    int n = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int c = 0; c < 8; ++c)
        if (!(c & (1 << axis))) edges[n++] = {c, axis};

    // Face boundaries, counter-clockwise about the outward normal.
    std::vector<std::array<int, 4>> faces;
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        auto corner = [&](int a, int b) { return (side << axis) | (a << u) | (b << v); };
        if (side == 1)
          faces.push_back({corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)});
        else
          faces.push_back({corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)});
      }
    }

    for (int mask = 0; mask < 256; ++mask) {
      auto inside = [&](int c) { return (mask >> c & 1) != 0; };
      std::array<int, 12> next;
      next.fill(-1);
      for (const auto& f : faces) {
        int enter = -1, first_leave = -1;
        for (int k = 0; k < 8; ++k) {  // two laps so runs wrapping past corner 0 close
          const int a = f[k % 4], b = f[(k + 1) % 4];
          if (inside(a) == inside(b)) continue;
          const int e = edge_id(a, b);
          if (!inside(a)) {
            enter = e;
          } else if (enter >= 0) {
            if (e == first_leave) break;
            if (first_leave < 0) first_leave = e;
            next[enter] = e;
            enter = -1;
          }
        }
      }
      std::array<bool, 12> used{};
      for (int s = 0; s < 12; ++s) {
        if (next[s] < 0 || used[s]) continue;
        std::vector<int> loop;
        for (int e = s; !used[e]; e = next[e]) {
          used[e] = true;
          loop.push_back(e);
          if (next[e] < 0) throw InvariantError("open marching-cubes loop");
        }
        loops[mask].push_back(std::move(loop));
      }
    }
  }
};

const CaseTable& case_table() {
  static const CaseTable table;
  return table;
}

}  // namespace

TriangleMesh marching_cubes(const SdfFn& sdf, int resolution, const GridBounds& bounds) {
  if (resolution < 2) throw InvariantError("marching cubes needs at least 2 samples per axis");
  if (!((bounds.hi - bounds.lo).array() > 0.0).all())
    throw InvariantError("marching-cubes bounds are degenerate");
  const auto n = static_cast<std::size_t>(resolution);
  const Vec3 cell = (bounds.hi - bounds.lo) / static_cast<double>(resolution - 1);
  auto point = [&](std::size_t i, std::size_t j, std::size_t k) {
    return Vec3(bounds.lo.x() + cell.x() * static_cast<double>(i),
                bounds.lo.y() + cell.y() * static_cast<double>(j),
                bounds.lo.z() + cell.z() * static_cast<double>(k));
  };
  auto index = [n](std::size_t i, std::size_t j, std::size_t k) { return (k * n + j) * n + i; };

  std::vector<double> values(n * n * n);
  parallel_for(n, [&](std::size_t k) {
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(n * n));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) pts.col(static_cast<Eigen::Index>(j * n + i)) = point(i, j, k);
    const Eigen::VectorXd v = sdf(pts);
    if (static_cast<std::size_t>(v.size()) != n * n)
      throw InvariantError("sdf returned the wrong number of values");
    std::copy(v.data(), v.data() + v.size(), values.begin() + static_cast<std::ptrdiff_t>(index(0, 0, k)));
  });

  const CaseTable& table = case_table();
  TriangleMesh mesh;
  std::vector<std::int64_t> vertex_of(3 * n * n * n, -1);
  auto vertex = [&](std::size_t i, std::size_t j, std::size_t k, int e) {
    const CubeEdge& ce = table.edges[e];
    const std::size_t i0 = i + (ce.c0 & 1), j0 = j + (ce.c0 >> 1 & 1), k0 = k + (ce.c0 >> 2 & 1);
    const std::size_t key = 3 * index(i0, j0, k0) + static_cast<std::size_t>(ce.axis);
    if (vertex_of[key] >= 0) return static_cast<std::uint32_t>(vertex_of[key]);
    std::size_t i1 = i0, j1 = j0, k1 = k0;
    (ce.axis == 0 ? i1 : ce.axis == 1 ? j1 : k1) += 1;
    const double a = values[index(i0, j0, k0)], b = values[index(i1, j1, k1)];
    const double t = a / (a - b);
    mesh.vertices.push_back(point(i0, j0, k0) + t * (point(i1, j1, k1) - point(i0, j0, k0)));
    vertex_of[key] = static_cast<std::int64_t>(mesh.vertices.size() - 1);
    return static_cast<std::uint32_t>(vertex_of[key]);
  };

  for (std::size_t k = 0; k + 1 < n; ++k)
    for (std::size_t j = 0; j + 1 < n; ++j)
      for (std::size_t i = 0; i + 1 < n; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c)
          if (values[index(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1))] < 0.0) mask |= 1 << c;
        for (const auto& loop : table.loops[mask]) {
          std::array<std::uint32_t, 12> ids{};
          for (std::size_t q = 0; q < loop.size(); ++q) ids[q] = vertex(i, j, k, loop[q]);
          for (std::size_t q = 1; q + 1 < loop.size(); ++q)
            mesh.faces.push_back({ids[0], ids[q], ids[q + 1]});
        }
      }
  return mesh;
}

TriangleMesh marching_cubes(const CanonicalField& field, const ParameterStore& store,
                            int resolution, const GridBounds& bounds) {
  return marching_cubes([&](const Eigen::Matrix3Xd& p) { return field.sdf(store, p); }, resolution,
                        bounds);
}

void color_vertices(TriangleMesh& mesh, const CanonicalField& field, const ParameterStore& store) {
  constexpr std::size_t kBatch = 4096;
  const std::size_t nv = mesh.vertices.size();
  mesh.colors.assign(nv, Vec3::Zero());
  const std::size_t batches = (nv + kBatch - 1) / kBatch;
  parallel_for(batches, [&](std::size_t bi) {
    const std::size_t lo = bi * kBatch, hi = std::min(nv, lo + kBatch);
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(hi - lo));
    for (std::size_t i = lo; i < hi; ++i) pts.col(static_cast<Eigen::Index>(i - lo)) = mesh.vertices[i];
    FieldBatch out;
    field.evaluate(store, pts, FieldQuery{true, false}, out, nullptr);
    for (std::size_t i = lo; i < hi; ++i) mesh.colors[i] = out.color.col(static_cast<Eigen::Index>(i - lo));
  });
}

void write_obj(std::ostream& os, const TriangleMesh& mesh) {
  mesh.validate();
  os.precision(9);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    os << "v " << v.x() << ' ' << v.y() << ' ' << v.z();
    if (!mesh.colors.empty()) {
      const Vec3& c = mesh.colors[i];
      os << ' ' << c.x() << ' ' << c.y() << ' ' << c.z();
    }
    os << '\n';
  }
  for (const auto& f : mesh.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ostringstream os;
  write_obj(os, mesh);
  write_file(path, os.str());
}

// ---- skinning and skeleton ------------------------------------------------------

void SkinnedMesh::validate() const {
  mesh.validate();
  const auto n = static_cast<Eigen::Index>(mesh.vertices.size());
  if (weights.rows() != n || dominant.size() != mesh.vertices.size())
    throw InvariantError("skinning data does not match the vertex count");
  for (Eigen::Index i = 0; i < n; ++i)
    if (dominant[static_cast<std::size_t>(i)] >= static_cast<std::uint32_t>(weights.cols()))
      throw InvariantError("dominant bone id out of range at vertex " + std::to_string(i));
}

namespace {

SkinnedMesh assign_with(const TriangleMesh& mesh, int bones,
                        const std::function<Eigen::VectorXd(const Vec3&)>& weights) {
  if (mesh.empty()) throw InvariantError("cannot assign bones to an empty mesh");
  SkinnedMesh s;
  s.mesh = mesh;
  const std::size_t n = mesh.vertices.size();
  s.weights.resize(static_cast<Eigen::Index>(n), bones);
  s.dominant.resize(n);
  parallel_for((n + 1023) / 1024, [&](std::size_t bi) {
    for (std::size_t i = bi * 1024; i < std::min(n, bi * 1024 + 1024); ++i) {
      const Eigen::VectorXd w = weights(mesh.vertices[i]);
      s.weights.row(static_cast<Eigen::Index>(i)) = w.transpose();
      s.dominant[i] = static_cast<std::uint32_t>(dominant_bone(w));
    }
  });
  return s;
}

}  // namespace

SkinnedMesh assign_vertices(const TriangleMesh& mesh, const SkinningModel& skin,
                            const ParameterStore& store) {
  return assign_with(mesh, skin.bone_count(), [&](const Vec3& x) { return skin.weights(store, x); });
}

SkinnedMesh assign_vertices(const TriangleMesh& mesh, std::span<const NeuralBone> bones,
                            double temperature) {
  return assign_with(mesh, static_cast<int>(bones.size()),
                     [&](const Vec3& x) { return skinning_weights(bones, x, temperature); });
}

Skeleton generate_skeleton(const SkinnedMesh& skinned, std::uint64_t threshold) {
  skinned.validate();
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  for (const auto& [a, b] : unique_edges(skinned.mesh)) {
    const auto da = skinned.dominant[a], db = skinned.dominant[b];
    if (da != db) ++counts[{std::min(da, db), std::max(da, db)}];
  }
  Skeleton s;
  s.threshold = threshold;
  for (const auto& [pair, count] : counts)
    if (count >= threshold) s.edges.push_back({pair.first, pair.second, count});
  return s;
}

TriangleMesh pose_mesh(const SkinnedMesh& skinned, std::span<const RigidTransform> transforms) {
  if (static_cast<int>(transforms.size()) != skinned.bone_count())
    throw InvariantError("pose has " + std::to_string(transforms.size()) + " transforms for " +
                         std::to_string(skinned.bone_count()) + " bones");
  std::vector<Mat3> r;
  for (const auto& t : transforms) r.push_back(t.rotation.matrix());
  TriangleMesh out = skinned.mesh;
  for (std::size_t i = 0; i < out.vertices.size(); ++i) {
    const Vec3 v = skinned.mesh.vertices[i];
    Vec3 p = Vec3::Zero();
    for (std::size_t b = 0; b < transforms.size(); ++b)
      p += skinned.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) *
           (r[b] * v + transforms[b].translation);
    out.vertices[i] = p;
  }
  return out;
}

TriangleMesh pose_mesh(const SkinnedMesh& skinned, const MotionSequence& seq, int t) {
  if (t < 0 || t >= seq.frame_count()) throw FrameRangeError(t, seq.frame_count());
  if (seq.bone_count() != skinned.bone_count())
    throw InvariantError("motion sequence and skinned mesh disagree on the bone count");
  std::vector<RigidTransform> d;
  for (int b = 0; b < seq.bone_count(); ++b) d.push_back(seq.delta(t, b));
  return pose_mesh(skinned, d);
}

// ---- pose files -----------------------------------------------------------------

namespace {

template <int N>
Eigen::Matrix<double, N, 1> read_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != N)
    throw ParseError(path, "expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw ParseError(path + "/" + std::to_string(i), "expected a number");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

json vector_json(const double* v, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

json transform_json(const RigidTransform& t) {
  return {{"rotation_quat_wxyz", vector_json(t.rotation.wxyz().data(), 4)},
          {"translation_xyz", vector_json(t.translation.data(), 3)}};
}

RigidTransform read_transform(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  RigidTransform t;
  if (!j.contains("rotation_quat_wxyz")) throw ParseError(path + "/rotation_quat_wxyz", "missing");
  t.rotation = Rotation::from_stored_wxyz(read_vector<4>(j["rotation_quat_wxyz"], path + "/rotation_quat_wxyz"));
  if (!j.contains("translation_xyz")) throw ParseError(path + "/translation_xyz", "missing");
  t.translation = read_vector<3>(j["translation_xyz"], path + "/translation_xyz");
  return t;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

PoseFile parse_pose(const std::string& text, int bone_count) {
  const json j = parse_json(text);
  if (!j.is_object()) throw ParseError("", "pose file must be a JSON object");
  PoseFile p;
  p.transforms.assign(static_cast<std::size_t>(bone_count), RigidTransform::identity());
  for (const auto& [key, value] : j.items()) {
    int id = -1;
    std::size_t used = 0;
    try {
      id = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size() || id < 0 || id >= bone_count) {
      p.warnings.push_back("ignoring unknown bone id '" + key + "'");
      continue;
    }
    p.transforms[static_cast<std::size_t>(id)] = read_transform(value, "/" + key);
  }
  return p;
}

std::string serialize_pose(std::span<const RigidTransform> transforms) {
  json j = json::object();
  for (std::size_t b = 0; b < transforms.size(); ++b) {
    const auto& t = transforms[b];
    if (t.rotation.wxyz() == Vec4(1, 0, 0, 0) && t.translation == Vec3::Zero()) continue;
    j[std::to_string(b)] = transform_json(t);
  }
  return j.dump(2) + "\n";
}

// ---- bundle ---------------------------------------------------------------------

void ArticulatedBundle::validate() const {
  skinned.validate();
  const auto nb = bones.size();
  if (static_cast<std::size_t>(skinned.bone_count()) != nb)
    throw InvariantError("skinning weights have " + std::to_string(skinned.bone_count()) +
                         " columns for " + std::to_string(nb) + " bones");
  if (rest_transforms.size() != nb)
    throw InvariantError("bundle has " + std::to_string(rest_transforms.size()) +
                         " rest transforms for " + std::to_string(nb) + " bones");
  for (const auto& e : skeleton.edges)
    if (e.a >= e.b || e.b >= nb) throw InvariantError("skeleton edge references an invalid bone pair");
}

namespace {

std::vector<float> to_f32(const double* data, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(data[i]);
  return out;
}

// Goes through a float buffer: gcc 11 -O3 drops the tail of an in-place
// double->float->double loop over a vector of Vec3.
void round_to_f32(double* data, std::size_t n) {
  const std::vector<float> f = to_f32(data, n);
  std::copy(f.begin(), f.end(), data);
}

}  // namespace

void quantize_bundle(ArticulatedBundle& bundle) {
  auto& mesh = bundle.skinned.mesh;
  if (!mesh.vertices.empty()) round_to_f32(mesh.vertices.front().data(), 3 * mesh.vertices.size());
  if (!mesh.colors.empty()) round_to_f32(mesh.colors.front().data(), 3 * mesh.colors.size());
  round_to_f32(bundle.skinned.weights.data(), static_cast<std::size_t>(bundle.skinned.weights.size()));
}

namespace {

const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "/" + key, "missing section");
  return *it;
}

std::string string_member(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ParseError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

std::uint64_t uint_member(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ParseError(path + "/" + key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<Vec3> read_vec3_payload(const json& j, const std::string& key, const std::string& path,
                                    std::size_t count) {
  const std::string p = path + "/" + key;
  const auto f = decode_f32(string_member(j, key, path), p);
  if (f.size() != 3 * count) throw ParseError(p, "expected " + std::to_string(3 * count) + " floats");
  std::vector<Vec3> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = Vec3(f[3 * i], f[3 * i + 1], f[3 * i + 2]);
  return out;
}

}  // namespace

std::string serialize_bundle(const ArticulatedBundle& b) {
  b.validate();
  const auto& mesh = b.skinned.mesh;
  const std::size_t nv = mesh.vertices.size();
  json j;
  j["format_version"] = kBundleFormatVersion;
  j["metadata"] = {{"grid_resolution", b.metadata.grid_resolution},
                   {"field_checkpoint_hash", b.metadata.field_checkpoint_hash},
                   {"vertex_count", nv},
                   {"face_count", mesh.faces.size()},
                   {"bone_count", b.bones.size()}};
  std::vector<double> flat(3 * nv);
  for (std::size_t i = 0; i < nv; ++i) Eigen::Map<Vec3>(flat.data() + 3 * i) = mesh.vertices[i];
  json jm{{"vertices", encode_f32(to_f32(flat.data(), flat.size()))}};
  if (!mesh.colors.empty()) {
    for (std::size_t i = 0; i < nv; ++i) Eigen::Map<Vec3>(flat.data() + 3 * i) = mesh.colors[i];
    jm["colors"] = encode_f32(to_f32(flat.data(), flat.size()));
  }
  std::vector<std::uint32_t> faces;
  faces.reserve(3 * mesh.faces.size());
  for (const auto& f : mesh.faces) faces.insert(faces.end(), f.begin(), f.end());
  jm["faces"] = encode_u32(faces);
  j["mesh"] = jm;

  // Row-major N × B.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = b.skinned.weights;
  j["skinning"] = {{"weights", encode_f32(to_f32(w.data(), static_cast<std::size_t>(w.size())))},
                   {"dominant", encode_u32(b.skinned.dominant)}};
  json bones = json::array();
  for (std::size_t i = 0; i < b.bones.size(); ++i) {
    const auto& bone = b.bones[i];
    bones.push_back({{"center", vector_json(bone.center.data(), 3)},
                     {"orientation_wxyz", vector_json(bone.orientation.wxyz().data(), 4)},
                     {"log_scales", vector_json(bone.log_scales.data(), 3)},
                     {"rest_transform", transform_json(b.rest_transforms[i])}});
  }
  j["bones"] = bones;
  json edges = json::array();
  for (const auto& e : b.skeleton.edges) edges.push_back({{"a", e.a}, {"b", e.b}, {"count", e.count}});
  j["skeleton"] = {{"threshold", b.skeleton.threshold}, {"edges", edges}};
  return j.dump() + "\n";
}

ArticulatedBundle parse_bundle(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Name the top-level section the document breaks off in.
    std::string section;
    std::size_t best = 0;
    for (const char* key : {"bones", "format_version", "mesh", "metadata", "skeleton", "skinning"}) {
      const auto pos = text.rfind("\"" + std::string(key) + "\":", e.byte);
      if (pos != std::string::npos && pos >= best) {
        best = pos;
        section = key;
      }
    }
    if (section.empty()) throw ParseError("", std::string("malformed bundle: ") + e.what());
    throw ParseError("/" + section, "section is truncated or malformed");
  }
  if (!j.is_object()) throw ParseError("", "bundle must be a JSON object");
  const json& version = member(j, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != kBundleFormatVersion)
    throw ParseError("/format_version", "unsupported bundle version");

  ArticulatedBundle b;
  const json& meta = member(j, "metadata", "");
  {
    const json& g = member(meta, "grid_resolution", "/metadata");
    if (!g.is_number_integer()) throw ParseError("/metadata/grid_resolution", "expected an integer");
    b.metadata.grid_resolution = g.get<int>();
  }
  b.metadata.field_checkpoint_hash = string_member(meta, "field_checkpoint_hash", "/metadata");
  const std::size_t nv = uint_member(meta, "vertex_count", "/metadata");
  const std::size_t nf = uint_member(meta, "face_count", "/metadata");
  const std::size_t nb = uint_member(meta, "bone_count", "/metadata");

  const json& jm = member(j, "mesh", "");
  auto& mesh = b.skinned.mesh;
  mesh.vertices = read_vec3_payload(jm, "vertices", "/mesh", nv);
  if (jm.contains("colors")) mesh.colors = read_vec3_payload(jm, "colors", "/mesh", nv);
  const auto faces = decode_u32(string_member(jm, "faces", "/mesh"), "/mesh/faces");
  if (faces.size() != 3 * nf) throw ParseError("/mesh/faces", "expected " + std::to_string(3 * nf) + " indices");
  mesh.faces.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) mesh.faces[f] = {faces[3 * f], faces[3 * f + 1], faces[3 * f + 2]};

  const json& js = member(j, "skinning", "");
  const auto w = decode_f32(string_member(js, "weights", "/skinning"), "/skinning/weights");
  if (nb == 0 || w.size() % nb != 0 || w.size() / nb != nv)
    throw InvariantError("skinning weights hold " + std::to_string(w.size()) + " values for " +
                         std::to_string(nv) + " vertices and " + std::to_string(nb) + " bones");
  b.skinned.weights.resize(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t k = 0; k < nb; ++k)
      b.skinned.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w[i * nb + k];
  b.skinned.dominant = decode_u32(string_member(js, "dominant", "/skinning"), "/skinning/dominant");

  const json& jb = member(j, "bones", "");
  if (!jb.is_array()) throw ParseError("/bones", "expected an array");
  for (std::size_t i = 0; i < jb.size(); ++i) {
    const std::string p = "/bones/" + std::to_string(i);
    NeuralBone bone;
    bone.center = read_vector<3>(member(jb[i], "center", p), p + "/center");
    bone.orientation = Rotation::from_stored_wxyz(read_vector<4>(member(jb[i], "orientation_wxyz", p), p + "/orientation_wxyz"));
    bone.log_scales = read_vector<3>(member(jb[i], "log_scales", p), p + "/log_scales");
    b.bones.push_back(bone);
    b.rest_transforms.push_back(read_transform(member(jb[i], "rest_transform", p), p + "/rest_transform"));
  }

  const json& sk = member(j, "skeleton", "");
  b.skeleton.threshold = uint_member(sk, "threshold", "/skeleton");
  const json& edges = member(sk, "edges", "/skeleton");
  if (!edges.is_array()) throw ParseError("/skeleton/edges", "expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = "/skeleton/edges/" + std::to_string(i);
    b.skeleton.edges.push_back({static_cast<std::uint32_t>(uint_member(edges[i], "a", p)),
                                static_cast<std::uint32_t>(uint_member(edges[i], "b", p)),
                                uint_member(edges[i], "count", p)});
  }
  if (b.bones.size() != nb)
    throw InvariantError("bundle lists " + std::to_string(b.bones.size()) + " bones but declares " +
                         std::to_string(nb));
  b.validate();
  return b;
}

void export_bundle(const ArticulatedBundle& bundle, const std::string& path) {
  write_file(path, serialize_bundle(bundle));
}

ArticulatedBundle import_bundle(const std::string& path) { return parse_bundle(read_file(path)); }

}  // namespace artic
