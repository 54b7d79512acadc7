#pragma once

#include <string>

#include "wildgs/nn.hpp"

namespace wildgs {

/// Binary tensor directory: "WGS1", u32 count, then per tensor u32 name
/// length, name bytes, u32 rank, u64 extents, float64 payload; all
/// little-endian.
void save_checkpoint(const std::string& path, const nn::ParamList& tensors);
nn::ParamList load_checkpoint(const std::string& path);

}  // namespace wildgs
