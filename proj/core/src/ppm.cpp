#include "tma/ppm.hpp"

#include <algorithm>
#include <fstream>

namespace tma {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

}  // namespace

void write_ppm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw ShapeError("rgb buffer size does not match " + std::to_string(width) + "x" +
                         std::to_string(height));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P6\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!os) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> frame_to_rgb(const Tensor& frame) {
    const int h = frame.shape[1], w = frame.shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> rgb(plane * 3);
    for (std::size_t p = 0; p < plane; ++p) {
        rgb[p * 3 + 0] = to_byte(frame.data[p]);
        rgb[p * 3 + 1] = to_byte(frame.data[plane + p]);
        rgb[p * 3 + 2] = to_byte(frame.data[2 * plane + p]);
    }
    return rgb;
}

std::vector<std::uint8_t> labels_to_rgb(const std::vector<std::uint8_t>& labels) {
    static const std::uint8_t palette[][3] = {
        {26, 26, 26},   {230, 38, 38},  {38, 217, 38},  {38, 64, 230},
        {230, 217, 38}, {217, 38, 217}, {38, 217, 217}, {242, 140, 38},
    };
    constexpr int n = static_cast<int>(sizeof(palette) / sizeof(palette[0]));
    std::vector<std::uint8_t> rgb(labels.size() * 3);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 255) {
            rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = 255;
        } else {
            const auto& c = palette[labels[i] % n];
            rgb[i * 3] = c[0];
            rgb[i * 3 + 1] = c[1];
            rgb[i * 3 + 2] = c[2];
        }
    }
    return rgb;
}

std::vector<std::uint8_t> heat_to_rgb(const std::vector<double>& values) {
    std::vector<std::uint8_t> rgb(values.size() * 3);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        rgb[i * 3 + 0] = to_byte(std::min(1.0, 3.0 * v));
        rgb[i * 3 + 1] = to_byte(std::clamp(3.0 * v - 1.0, 0.0, 1.0));
        rgb[i * 3 + 2] = to_byte(std::clamp(3.0 * v - 2.0, 0.0, 1.0));
    }
    return rgb;
}

}  // namespace tma
