#pragma once

#include <cstdint>
#include <vector>

#include "dsdtex/geometry.hpp"

namespace dsdtex {

inline constexpr std::int32_t kNoTriangle = -1;

struct GBufferPixel {
    bool hit = false;
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    double depth = 0.0;
    std::int32_t triangle = kNoTriangle;
    Vec3 barycentric = Vec3::Zero();
};

// Per-pixel surface attributes, row-major with row 0 at the top of the image.
struct GBuffer {
    int width = 0;
    int height = 0;
    std::vector<GBufferPixel> pixels;

    const GBufferPixel& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t hit_count() const;
};

// Depth-tested rasterization at pixel centers with perspective-correct
// barycentrics. Triangles crossing the near plane are clipped. On exact depth
// ties the lower triangle id wins.
GBuffer rasterize(const Mesh& mesh, const Camera& camera);

// Foreground depths mapped affinely so nearest -> 1 and farthest -> 0; misses are 0.
// A constant-depth foreground maps to 1.
std::vector<double> depth_map(const GBuffer& gbuffer);

}  // namespace dsdtex
