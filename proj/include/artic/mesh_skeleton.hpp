// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/fields.hpp"
#include "artic/motion.hpp"
#include "artic/skinning.hpp"

namespace artic {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  /// Empty, or one RGB triple per vertex.
  std::vector<Vec3> colors;

  bool empty() const { return vertices.empty(); }
  /// Throws InvariantError on out-of-range indices, degenerate faces or a color-count mismatch.
  void validate() const;
  /// Number of unique undirected edges.
  std::size_t edge_count() const;
  /// V − E + F.
  long euler_characteristic() const;
  /// Σ over faces of the signed tetrahedron volume against the origin.
  double signed_volume() const;
};

struct GridBounds {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
};

/// Batched SDF: one value per column of the input.
using SdfFn = std::function<Eigen::VectorXd(const Eigen::Matrix3Xd&)>;

/// Marching cubes over `resolution` samples per axis. The surface is the zero level set with
/// the inside at sdf < 0; faces wind counter-clockwise seen from outside. No sign change gives an
/// empty mesh.
TriangleMesh marching_cubes(const SdfFn& sdf, int resolution = 128, const GridBounds& bounds = {});
TriangleMesh marching_cubes(const CanonicalField& field, const ParameterStore& store,
                            int resolution = 128, const GridBounds& bounds = {});

/// Queries the canonical color at every vertex.
void color_vertices(TriangleMesh& mesh, const CanonicalField& field, const ParameterStore& store);

/// ASCII OBJ with `v x y z r g b` records when colored and 1-based faces.
void write_obj(std::ostream& os, const TriangleMesh& mesh);
void write_obj(const std::string& path, const TriangleMesh& mesh);

struct SkinnedMesh {
  TriangleMesh mesh;
  /// N × B, rows are probability vectors.
  Eigen::MatrixXd weights;
  std::vector<std::uint32_t> dominant;

  int bone_count() const { return static_cast<int>(weights.cols()); }
  void validate() const;
};

/// Full weight row and argmax (lowest id on ties) per vertex.
SkinnedMesh assign_vertices(const TriangleMesh& mesh, const SkinningModel& skin,
                            const ParameterStore& store);
/// The same from explicit rest bones, without delta skinning.
SkinnedMesh assign_vertices(const TriangleMesh& mesh, std::span<const NeuralBone> bones,
                            double temperature);

struct SkeletonEdge {
  std::uint32_t a = 0, b = 0;  // a < b
  std::uint64_t count = 0;
  bool operator==(const SkeletonEdge&) const = default;
};

struct Skeleton {
  std::vector<SkeletonEdge> edges;  // sorted by (a, b)
  std::uint64_t threshold = 3;
};

/// Counts unique mesh edges whose endpoints are dominated by different bones, per bone pair, and
/// keeps pairs with count ≥ threshold.
Skeleton generate_skeleton(const SkinnedMesh& skinned, std::uint64_t threshold = 3);

/// ν' = Σ_b w_b T_b(ν). Colors are carried over from the rest mesh.
TriangleMesh pose_mesh(const SkinnedMesh& skinned, std::span<const RigidTransform> transforms);
/// Transforms ΔJ^t_b of a motion sequence.
TriangleMesh pose_mesh(const SkinnedMesh& skinned, const MotionSequence& seq, int t);

/// Per-bone user transforms: {"<bone id>": {"rotation_quat_wxyz": [..], "translation_xyz": [..]}}.
struct PoseFile {
  std::vector<RigidTransform> transforms;
  std::vector<std::string> warnings;
};
/// Missing bones stay identity; unknown ids produce a warning and are ignored.
PoseFile parse_pose(const std::string& text, int bone_count);
/// Identity entries are omitted.
std::string serialize_pose(std::span<const RigidTransform> transforms);

struct BundleMetadata {
  int grid_resolution = 128;
  std::string field_checkpoint_hash;
  bool operator==(const BundleMetadata&) const = default;
};

struct ArticulatedBundle {
  SkinnedMesh skinned;
  std::vector<NeuralBone> bones;
  Skeleton skeleton;
  std::vector<RigidTransform> rest_transforms;
  BundleMetadata metadata;

  /// Throws InvariantError when bone counts disagree or the mesh is malformed.
  void validate() const;
};

/// Rounds vertex, color and weight payloads to f32 so that export / import is lossless.
void quantize_bundle(ArticulatedBundle& bundle);

inline constexpr int kBundleFormatVersion = 1;

std::string serialize_bundle(const ArticulatedBundle& bundle);
/// Throws ParseError with a JSON-pointer path for malformed or missing sections and
/// InvariantError for inconsistent content.
ArticulatedBundle parse_bundle(const std::string& text);
void export_bundle(const ArticulatedBundle& bundle, const std::string& path);
ArticulatedBundle import_bundle(const std::string& path);

}  // namespace artic
