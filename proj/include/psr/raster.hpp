#pragma once

#include "psr/core.hpp"
#include "psr/image.hpp"
#include "psr/scene.hpp"

#include <cstdint>
#include <vector>

namespace psr {

/// Geometric per-pixel buffers. Background pixels hold zeros everywhere and
/// face id -1.
struct GBuffer
{
    int width = 0;
    int height = 0;
    ImageF position; // world space
    ImageF normal;   // unit, flipped toward the camera when needed
    ImageF depth;    // camera-space distance along the view axis
    ImageF mask;     // 0 or 1
    ImageF albedo;
    ImageF flipped;  // 1 where the interpolated normal was flipped toward the camera
    std::vector<std::int32_t> face;

    GBuffer() = default;
    GBuffer(int w, int h);

    bool covered(int x, int y) const { return mask.at(x, y) > 0.5f; }
    std::size_t covered_count() const;
};

struct RasterOptions
{
    /// Tile edge in pixels; results are identical for any tile size.
    int tile_size = 32;
};

/// Pixel-center sampling with a top-left fill rule on 1/256 sub-pixel fixed
/// point coordinates, near-plane clipping, a z-buffer keyed by
/// (depth, face index) and perspective-correct attribute interpolation.
/// Back faces are rasterized.
GBuffer rasterize(const TriangleMesh& mesh, const Camera& camera, const RasterOptions& opts = {});

/// Camera-space depth recomputed from the position buffer; background is 0.
ImageF depth_linearization(const GBuffer& gbuffer, const Camera& camera);

} // namespace psr
