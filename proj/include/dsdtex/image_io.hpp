#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace dsdtex {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Interleaved floating-point image, row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

double linear_to_srgb(double v);
double srgb_to_linear(double v);
std::uint8_t quantize_unit(double v);

// 8-bit PNG with 1, 3 or 4 channels. Values are clamped to [0, 1]; when `srgb_encode`
// is set, color channels (not alpha) pass through the sRGB transfer first.
void write_png(const std::filesystem::path& path, const Image& image, bool srgb_encode);
// Returns raw [0, 1] values; 16-bit inputs are reduced to 8-bit precision.
Image read_png(const std::filesystem::path& path);
// Radiance RGBE (.hdr), flat or run-length encoded scanlines. Returns linear RGB.
Image read_hdr(const std::filesystem::path& path);

}  // namespace dsdtex
