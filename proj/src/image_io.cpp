#include "dsdtex/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <png.h>

namespace dsdtex {

double linear_to_srgb(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_to_linear(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

std::uint8_t quantize_unit(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::filesystem::path& path, const Image& image, bool srgb_encode) {
    if (image.channels != 1 && image.channels != 3 && image.channels != 4)
        throw ImageError("PNG export supports 1, 3 or 4 channels");
    if (image.width <= 0 || image.height <= 0) throw ImageError("PNG export of an empty image");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bool alpha = image.channels == 4 && i % 4 == 3;
        double v = image.data[i];
        bytes[i] = quantize_unit(srgb_encode && !alpha ? linear_to_srgb(v) : v);
    }

    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 1 ? PNG_FORMAT_GRAY : image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw ImageError("cannot write PNG " + path.string() + ": " + png.message);
}

Image read_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw ImageError("cannot read PNG " + path.string() + ": " + png.message);
    int channels = PNG_IMAGE_SAMPLE_CHANNELS(png.format);
    png.format = channels <= 2 ? PNG_FORMAT_GRAY : (png.format & PNG_FORMAT_FLAG_ALPHA) ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
    channels = PNG_IMAGE_SAMPLE_CHANNELS(png.format);
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw ImageError("cannot decode PNG " + path.string() + ": " + msg);
    }
    Image out(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] / 255.0;
    return out;
}

namespace {

void rgbe_to_rgb(const std::uint8_t* rgbe, double* rgb) {
    if (rgbe[3] == 0) {
        rgb[0] = rgb[1] = rgb[2] = 0.0;
        return;
    }
    double f = std::ldexp(1.0, static_cast<int>(rgbe[3]) - (128 + 8));
    for (int c = 0; c < 3; ++c) rgb[c] = (rgbe[c] + 0.5) * f;
}

}  // namespace

Image read_hdr(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageError("cannot read HDR " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("#?", 0) != 0) throw ImageError("not a Radiance HDR file: " + path.string());
    bool rgbe = false;
    while (std::getline(in, line) && !line.empty()) {
        if (line == "FORMAT=32-bit_rle_rgbe") rgbe = true;
        if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe")
            throw ImageError("unsupported HDR format '" + line + "'");
    }
    (void)rgbe;
    std::getline(in, line);
    char ya[3] = {}, xa[3] = {};
    int h = 0, w = 0;
    if (std::sscanf(line.c_str(), "%2s %d %2s %d", ya, &h, xa, &w) != 4 || std::string(ya) != "-Y" || std::string(xa) != "+X" ||
        w <= 0 || h <= 0)
        throw ImageError("unsupported HDR resolution line '" + line + "'");

    Image out(w, h, 3);
    std::vector<std::uint8_t> scan(static_cast<std::size_t>(w) * 4);
    auto read_byte = [&]() {
        int c = in.get();
        if (c == EOF) throw ImageError("truncated HDR " + path.string());
        return static_cast<std::uint8_t>(c);
    };
    for (int y = 0; y < h; ++y) {
        std::uint8_t head[4];
        for (auto& b : head) b = read_byte();
        bool rle = w >= 8 && w < 32768 && head[0] == 2 && head[1] == 2 && ((head[2] << 8) | head[3]) == w;
        if (!rle) {
            std::memcpy(scan.data(), head, 4);
            for (std::size_t i = 4; i < scan.size(); ++i) scan[i] = read_byte();
        } else {
            for (int c = 0; c < 4; ++c) {
                int x = 0;
                while (x < w) {
                    int count = read_byte();
                    if (count > 128) {
                        count -= 128;
                        std::uint8_t v = read_byte();
                        if (x + count > w) throw ImageError("corrupt HDR run");
                        for (int k = 0; k < count; ++k) scan[(x++) * 4 + c] = v;
                    } else {
                        if (count == 0 || x + count > w) throw ImageError("corrupt HDR run");
                        for (int k = 0; k < count; ++k) scan[(x++) * 4 + c] = read_byte();
                    }
                }
            }
        }
        for (int x = 0; x < w; ++x) rgbe_to_rgb(&scan[x * 4], &out.data[(static_cast<std::size_t>(y) * w + x) * 3]);
    }
    return out;
}

}  // namespace dsdtex
