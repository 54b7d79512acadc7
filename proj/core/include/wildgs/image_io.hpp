#pragma once

#include <cstdint>
#include <string>

#include "wildgs/tensor.hpp"

namespace wildgs {

/// 8-bit quantization used for every image written: round half up from
/// [0, 1] after clamping, so 0.5 -> 128.
std::uint8_t to_byte(double v);

/// Reads an 8-bit PNG as a 1 x C x H x W tensor in [0, 1]; C = 3 for RGB
/// files, 1 for grayscale (`channels` forces the conversion when nonzero).
ad::Tensor read_image(const std::string& path, int channels = 0);

/// Writes a 1 x C x H x W tensor (C = 1 or 3) as an 8-bit PNG.
void write_image(const std::string& path, const ad::Tensor& image);

/// 16-bit binary PGM holding millimetres. Returns metres, 1 x 1 x H x W.
ad::Tensor read_depth(const std::string& path);
/// Rounds to the nearest millimetre; values must lie in [0, 65.535] m.
void write_depth(const std::string& path, const ad::Tensor& depth);

}  // namespace wildgs
