// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artic {

/// Which optimization group a parameter block belongs to.
enum class ParamGroup { canonical, articulation, camera };

std::string_view to_string(ParamGroup g);
std::optional<ParamGroup> parse_group(std::string_view s);

/// Quaternion blocks hold contiguous w-first 4-tuples that are renormalized after updates.
enum class ParamKind { plain, quaternion };

struct ParamBlock {
  std::string name;
  ParamGroup group;
  ParamKind kind;
  std::vector<int> shape;
  std::size_t offset;
  std::size_t size;
};

using Gradient = std::vector<double>;

/// Flat storage of every optimizable scalar, partitioned into named, tagged blocks.
class ParameterStore {
 public:
  using Handle = std::size_t;

  Handle add(std::string name, ParamGroup group, std::vector<int> shape,
             ParamKind kind = ParamKind::plain);

  std::span<double> values(Handle h) { return {data_.data() + blocks_[h].offset, blocks_[h].size}; }
  std::span<const double> values(Handle h) const {
    return {data_.data() + blocks_[h].offset, blocks_[h].size};
  }
  std::span<double> all() { return data_; }
  std::span<const double> all() const { return data_; }

  const ParamBlock& block(Handle h) const { return blocks_[h]; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::optional<Handle> find(std::string_view name) const;
  Handle require(std::string_view name) const;
  std::size_t size() const { return data_.size(); }

  Gradient zeros() const { return Gradient(data_.size(), 0.0); }
  /// 1 for scalars in `group`, 0 elsewhere.
  std::vector<double> group_mask(ParamGroup group) const;
  void normalize_quaternions();

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<double> data_;
};

/// Gradient slice of a block, laid out like ParameterStore::values.
inline std::span<double> grad_block(std::span<double> grad, const ParameterStore& store,
                                    ParameterStore::Handle h) {
  const auto& b = store.block(h);
  return grad.subspan(b.offset, b.size);
}

}  // namespace artic
