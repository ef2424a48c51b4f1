// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "artic/model.hpp"

namespace artic {

inline constexpr int kCheckpointFormatVersion = 1;

/// {format_version, metadata: {model}, groups: group → name → {shape, kind, data}} with data as
/// base64 little-endian f64. Reloading reproduces every parameter bit for bit.
std::string serialize_checkpoint(const ArticulatedModel& model);
/// Throws ParseError naming the offending path, including blocks that do not match the model
/// described by the metadata.
std::unique_ptr<ArticulatedModel> parse_checkpoint(const std::string& text);

void save_checkpoint(const ArticulatedModel& model, const std::string& path);
std::unique_ptr<ArticulatedModel> load_checkpoint(const std::string& path);

}  // namespace artic
