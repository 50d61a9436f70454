#pragma once

#include "psr/brdf.hpp"
#include "psr/envlight.hpp"
#include "psr/raster.hpp"

#include <array>
#include <filesystem>
#include <string>

namespace psr {

/// The seven per-pixel outputs {C, n, d, mask, a, L_spec, L_diff}, plus the
/// world position carried over from rasterization.
struct RenderBuffers
{
    int width = 0;
    int height = 0;
    ImageF color;
    ImageF normal;
    ImageF depth;
    ImageF mask;
    ImageF albedo;
    ImageF l_spec;
    ImageF l_diff;
    ImageF position;

    bool covered(int x, int y) const { return mask.at(x, y) > 0.5f; }
};

/// Split-sum evaluation at one surface point. All vectors unit length, v and
/// n pointing away from the surface.
struct SplitSumSample
{
    Rgb color;
    Rgb l_spec;
    Rgb l_diff;
    Rgb spec_albedo;
    Rgb diff_albedo;
};

SplitSumSample shade_point(const Vec3& n, const Vec3& v, const Rgb& albedo,
                           const Material& material, const PrefilteredEnvironment& pre,
                           const DfgLut& lut);

/// Integer cell coordinates of every bilinear footprint touched by
/// shade_point. Two evaluations with equal signatures lie inside the same
/// interpolation cells, where the model is smooth.
std::array<std::int64_t, 8> shade_point_cells(const Vec3& n, const Vec3& v, const Material& material,
                                              const PrefilteredEnvironment& pre, const DfgLut& lut);

/// Deferred shading of a rasterized view under one uniform material.
RenderBuffers shade_splitsum(const GBuffer& gbuffer, const Material& material,
                             const PrefilteredEnvironment& pre, const DfgLut& lut,
                             const Camera& camera);

/// Re-shading with a new environment or material; identical to shade_splitsum.
RenderBuffers relight(const GBuffer& gbuffer, const Material& material,
                      const PrefilteredEnvironment& new_env, const DfgLut& lut,
                      const Camera& camera);

/// a_s at every pixel recomputed from stored buffers (position, normal, albedo).
ImageF recompute_specular_albedo(const RenderBuffers& buffers, const Material& material,
                                 const DfgLut& lut, const Camera& camera);

/// Largest |C - (a_d L_diff + a_s L_spec)| / max(1, |a_d L_diff + a_s L_spec|)
/// over masked pixels and channels; background radiance counts in absolute terms.
double decomposition_residual(const RenderBuffers& buffers, const Material& material,
                              const DfgLut& lut, const Camera& camera);

/// File names: {view_id}_{buffer}.{ext}
struct BufferFiles
{
    std::string color, normal, depth, mask, albedo, l_spec, l_diff, position, preview;

    static BufferFiles for_view(const std::string& view_id);
};

BufferFiles write_render_buffers(const std::filesystem::path& dir, const std::string& view_id,
                                 const RenderBuffers& buffers);
RenderBuffers read_render_buffers(const std::filesystem::path& dir, const std::string& view_id);

} // namespace psr
