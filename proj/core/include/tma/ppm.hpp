#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

/// Binary PPM (P6), 8-bit RGB.
void write_ppm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& rgb);

/// 3 x H x W frame in [0,1] -> interleaved 8-bit RGB.
std::vector<std::uint8_t> frame_to_rgb(const Tensor& frame);

/// Class-indexed palette image.
std::vector<std::uint8_t> labels_to_rgb(const std::vector<std::uint8_t>& labels);

/// Heat map for values in [0,1] (black -> red -> yellow -> white).
std::vector<std::uint8_t> heat_to_rgb(const std::vector<double>& values);

}  // namespace tma
