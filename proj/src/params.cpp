// SPDX-License-Identifier: Apache-2.0
#include "artic/params.hpp"

#include <cmath>
#include <numeric>

#include "artic/errors.hpp"

namespace artic {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::canonical: return "canonical";
    case ParamGroup::articulation: return "articulation";
    case ParamGroup::camera: return "camera";
  }
  return "unknown";
}

std::optional<ParamGroup> parse_group(std::string_view s) {
  if (s == "canonical") return ParamGroup::canonical;
  if (s == "articulation") return ParamGroup::articulation;
  if (s == "camera") return ParamGroup::camera;
  return std::nullopt;
}

ParameterStore::Handle ParameterStore::add(std::string name, ParamGroup group,
                                           std::vector<int> shape, ParamKind kind) {
  if (find(name)) throw InvariantError("duplicate parameter block '" + name + "'");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvariantError("negative dimension in block '" + name + "'");
    n *= static_cast<std::size_t>(d);
  }
  if (kind == ParamKind::quaternion && n % 4 != 0)
    throw InvariantError("quaternion block '" + name + "' size not a multiple of 4");
  blocks_.push_back({std::move(name), group, kind, std::move(shape), data_.size(), n});
  data_.resize(data_.size() + n, 0.0);
  if (kind == ParamKind::quaternion)
    for (std::size_t i = blocks_.back().offset; i < data_.size(); i += 4) data_[i] = 1.0;
  return blocks_.size() - 1;
}

std::optional<ParameterStore::Handle> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  return std::nullopt;
}

ParameterStore::Handle ParameterStore::require(std::string_view name) const {
  if (auto h = find(name)) return *h;
  throw InvariantError("missing parameter block '" + std::string(name) + "'");
}

std::vector<double> ParameterStore::group_mask(ParamGroup group) const {
  std::vector<double> mask(data_.size(), 0.0);
  for (const auto& b : blocks_)
    if (b.group == group) std::fill_n(mask.begin() + b.offset, b.size, 1.0);
  return mask;
}

void ParameterStore::normalize_quaternions() {
  for (const auto& b : blocks_) {
    if (b.kind != ParamKind::quaternion) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size; i += 4) {
      double n = 0.0;
      for (int k = 0; k < 4; ++k) n += data_[i + k] * data_[i + k];
      n = std::sqrt(n);
      if (n > 0.0 && std::isfinite(n)) {
        for (int k = 0; k < 4; ++k) data_[i + k] /= n;
      } else {
        data_[i] = 1.0;
        data_[i + 1] = data_[i + 2] = data_[i + 3] = 0.0;
      }
    }
  }
}

}  // namespace artic
