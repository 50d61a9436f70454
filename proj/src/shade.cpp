#include "psr/shade.hpp"

#include <cmath>

namespace psr {

SplitSumSample shade_point(const Vec3& n, const Vec3& v, const Rgb& albedo,
                           const Material& material, const PrefilteredEnvironment& pre,
                           const DfgLut& lut)
{
    SplitSumSample s;
    const Vec3 r = reflect(v, n).normalized();
    const double nv = clamp_cosine(n.dot(v));
    const Vec2 f = lut.lookup(nv, material.roughness());
    s.l_spec = sample_prefiltered(pre, r, material.roughness());
    s.l_diff = sample_diffuse(pre, n);
    s.spec_albedo = specular_albedo(albedo, material, f.x(), f.y());
    s.diff_albedo = diffuse_albedo(albedo, material);
    s.color = s.diff_albedo * s.l_diff + s.spec_albedo * s.l_spec;
    return s;
}

std::array<std::int64_t, 8> shade_point_cells(const Vec3& n, const Vec3& v, const Material& material,
                                              const PrefilteredEnvironment& pre, const DfgLut& lut)
{
    auto cell = [](const ImageF& img, const Vec3& dir) {
        const Vec2 uv = direction_to_texel(dir, img.width(), img.height());
        const double fy = std::clamp(uv.y(), 0.5, img.height() - 0.5) - 0.5;
        return std::pair<std::int64_t, std::int64_t>(std::int64_t(std::floor(uv.x() - 0.5)),
                                                     std::int64_t(std::floor(fy)));
    };
    const Vec3 r = reflect(v, n).normalized();
    const double x = material.roughness() * double(pre.levels() - 1);
    const int l0 = std::min(int(std::floor(x)), pre.levels() - 1);
    const int l1 = std::min(l0 + 1, pre.levels() - 1);
    const auto d = cell(pre.diffuse_map, n);
    const auto s0 = cell(pre.specular_mips[std::size_t(l0)], r);
    const auto s1 = cell(pre.specular_mips[std::size_t(l1)], r);
    const double nv = clamp_cosine(n.dot(v));
    const auto lut_cell = std::int64_t(std::floor(nv * (lut.cos_resolution() - 1)));
    return {d.first, d.second, s0.first, s0.second, s1.first, s1.second, lut_cell, l0};
}

RenderBuffers shade_splitsum(const GBuffer& gbuffer, const Material& material,
                             const PrefilteredEnvironment& pre, const DfgLut& lut,
                             const Camera& camera)
{
    if (gbuffer.width != camera.width || gbuffer.height != camera.height)
        throw DimensionError("gbuffer resolution does not match camera");
    if (pre.levels() < 1 || pre.diffuse_map.empty()) throw ConfigError("prefiltered environment is empty");

    const int W = gbuffer.width;
    const int H = gbuffer.height;
    RenderBuffers out;
    out.width = W;
    out.height = H;
    out.color = ImageF(W, H, 3);
    out.normal = gbuffer.normal;
    out.depth = gbuffer.depth;
    out.mask = gbuffer.mask;
    out.albedo = gbuffer.albedo;
    out.position = gbuffer.position;
    out.l_spec = ImageF(W, H, 3);
    out.l_diff = ImageF(W, H, 3);

    parallel_for(0, std::size_t(W) * H, [&](std::size_t idx) {
        const int x = int(idx % std::size_t(W));
        const int y = int(idx / std::size_t(W));
        if (!gbuffer.covered(x, y)) return;
        const Vec3 pos = gbuffer.position.rgb(x, y).matrix();
        const Vec3 n = gbuffer.normal.rgb(x, y).matrix().normalized();
        const Vec3 v = (camera.position - pos).normalized();
        const auto s = shade_point(n, v, gbuffer.albedo.rgb(x, y), material, pre, lut);
        out.l_spec.set_rgb(x, y, s.l_spec);
        out.l_diff.set_rgb(x, y, s.l_diff);
        // Compose from the stored float radiances so the buffers decompose exactly.
        out.color.set_rgb(x, y, s.diff_albedo * out.l_diff.rgb(x, y) + s.spec_albedo * out.l_spec.rgb(x, y));
    });
    return out;
}

RenderBuffers relight(const GBuffer& gbuffer, const Material& material,
                      const PrefilteredEnvironment& new_env, const DfgLut& lut,
                      const Camera& camera)
{
    return shade_splitsum(gbuffer, material, new_env, lut, camera);
}

ImageF recompute_specular_albedo(const RenderBuffers& buffers, const Material& material,
                                 const DfgLut& lut, const Camera& camera)
{
    ImageF out(buffers.width, buffers.height, 3);
    for (int y = 0; y < buffers.height; ++y) {
        for (int x = 0; x < buffers.width; ++x) {
            if (!buffers.covered(x, y)) continue;
            const Vec3 pos = buffers.position.rgb(x, y).matrix();
            const Vec3 n = buffers.normal.rgb(x, y).matrix().normalized();
            const Vec3 v = (camera.position - pos).normalized();
            const Vec2 f = lut.lookup(clamp_cosine(n.dot(v)), material.roughness());
            out.set_rgb(x, y, specular_albedo(buffers.albedo.rgb(x, y), material, f.x(), f.y()));
        }
    }
    return out;
}

double decomposition_residual(const RenderBuffers& buffers, const Material& material,
                              const DfgLut& lut, const Camera& camera)
{
    const ImageF a_s = recompute_specular_albedo(buffers, material, lut, camera);
    double worst = 0.0;
    for (int y = 0; y < buffers.height; ++y) {
        for (int x = 0; x < buffers.width; ++x) {
            if (!buffers.covered(x, y)) {
                // Background must be zero in every radiance buffer.
                worst = std::max({worst, buffers.color.rgb(x, y).abs().maxCoeff(),
                                  buffers.l_spec.rgb(x, y).abs().maxCoeff(),
                                  buffers.l_diff.rgb(x, y).abs().maxCoeff()});
                continue;
            }
            const Rgb a_d = diffuse_albedo(buffers.albedo.rgb(x, y), material);
            const Rgb expect = a_d * buffers.l_diff.rgb(x, y) + a_s.rgb(x, y) * buffers.l_spec.rgb(x, y);
            const double scale = std::max(1.0, expect.abs().maxCoeff());
            worst = std::max(worst, (buffers.color.rgb(x, y) - expect).abs().maxCoeff() / scale);
        }
    }
    return worst;
}

BufferFiles BufferFiles::for_view(const std::string& id)
{
    return {id + "_color.pfm",  id + "_normal.pfm", id + "_depth.pfm",
            id + "_mask.png",   id + "_albedo.pfm", id + "_l_spec.pfm",
            id + "_l_diff.pfm", id + "_position.pfm", id + "_preview.png"};
}

BufferFiles write_render_buffers(const std::filesystem::path& dir, const std::string& view_id,
                                 const RenderBuffers& b)
{
    std::filesystem::create_directories(dir);
    const auto files = BufferFiles::for_view(view_id);
    write_pfm(dir / files.color, b.color);
    write_pfm(dir / files.normal, b.normal);
    write_pfm(dir / files.depth, b.depth);
    write_mask_png(dir / files.mask, b.mask);
    write_pfm(dir / files.albedo, b.albedo);
    write_pfm(dir / files.l_spec, b.l_spec);
    write_pfm(dir / files.l_diff, b.l_diff);
    write_pfm(dir / files.position, b.position);
    write_png_preview(dir / files.preview, b.color);
    return files;
}

RenderBuffers read_render_buffers(const std::filesystem::path& dir, const std::string& view_id)
{
    const auto files = BufferFiles::for_view(view_id);
    RenderBuffers b;
    b.color = read_pfm(dir / files.color);
    b.normal = read_pfm(dir / files.normal);
    b.depth = read_pfm(dir / files.depth);
    const ImageF mask_png = read_png(dir / files.mask);
    b.albedo = read_pfm(dir / files.albedo);
    b.l_spec = read_pfm(dir / files.l_spec);
    b.l_diff = read_pfm(dir / files.l_diff);
    b.position = read_pfm(dir / files.position);
    b.width = b.color.width();
    b.height = b.color.height();
    b.mask = ImageF(b.width, b.height, 1);
    for (int y = 0; y < b.height; ++y)
        for (int x = 0; x < b.width; ++x) b.mask.at(x, y) = mask_png.at(x, y) > 0.5f ? 1.0f : 0.0f;
    for (const ImageF* img : {&b.normal, &b.depth, &b.albedo, &b.l_spec, &b.l_diff, &b.position})
        if (img->width() != b.width || img->height() != b.height)
            throw DimensionError("buffer resolution mismatch in " + dir.string());
    return b;
}

} // namespace psr
