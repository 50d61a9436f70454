#include "psr/mcref.hpp"

#include "psr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace psr {

namespace {

constexpr std::uint64_t kDiffuseLobe = 1;
constexpr std::uint64_t kSpecularLobe = 2;

Rgb estimate_specular(const Vec3& n, const Vec3& v, double roughness, const Rgb& f0,
                      const EnvironmentMap& env, const McConfig& cfg, std::uint64_t stream)
{
    const Mat3 frame = tangent_frame(n);
    const double nv = clamp_cosine(n.dot(v));
    const double alpha = roughness * roughness;
    KeyedRng rng{cfg.seed, stream, kSpecularLobe};
    Rgb sum = Rgb::Zero();
    for (int i = 0; i < cfg.samples; ++i) {
        const double u1 = rng.uniform();
        const double u2 = rng.uniform();
        const Vec3 h = frame * sample_ggx_half_local(u1, u2, alpha);
        const double vh = v.dot(h);
        if (vh <= 0.0) continue;
        const Vec3 l = 2.0 * vh * h - v;
        const double nl = n.dot(l);
        if (nl <= 0.0) continue;
        const double nh = std::max(n.dot(h), 1e-12);
        // f cos / pdf with pdf = D (n.h) / (4 (v.h)); the D terms cancel.
        const double g = geometry_smith(roughness, nv, nl);
        const Rgb f = fresnel_schlick(f0, vh);
        sum += f * (g * vh / (nv * nh)) * env.sample(l);
    }
    return sum / double(cfg.samples);
}

} // namespace

Rgb integrate_specular(const Vec3& n, const Vec3& v, double roughness, const Rgb& f0,
                       const EnvironmentMap& env, const McConfig& cfg, std::uint64_t stream)
{
    return estimate_specular(n, v, roughness, f0, env, cfg, stream);
}

McResult integrate_pixel(const Vec3& n, const Vec3& v, const Material& material, const Rgb& albedo,
                         const EnvironmentMap& env, const McConfig& cfg, std::uint64_t stream)
{
    if (cfg.samples <= 0) throw ConfigError("mc samples must be positive");
    McResult out;

    const Rgb a_d = diffuse_albedo(albedo, material);
    if ((a_d > 0.0).any()) {
        const Mat3 frame = tangent_frame(n);
        KeyedRng rng{cfg.seed, stream, kDiffuseLobe};
        Rgb sum = Rgb::Zero();
        for (int i = 0; i < cfg.samples; ++i) {
            const double u1 = rng.uniform();
            const double u2 = rng.uniform();
            // pdf = cos / pi cancels the cosine and 1/pi of the integrand.
            sum += env.sample(frame * sample_cosine_local(u1, u2));
        }
        out.diffuse = a_d * sum / double(cfg.samples);
    }
    out.specular = estimate_specular(n, v, material.roughness(), base_reflectance(albedo, material),
                                     env, cfg, stream);
    return out;
}

McImage integrate_image(const GBuffer& gbuffer, const Material& material, const EnvironmentMap& env,
                        const Camera& camera, const McConfig& cfg)
{
    if (gbuffer.width != camera.width || gbuffer.height != camera.height)
        throw DimensionError("gbuffer resolution does not match camera");
    const int W = gbuffer.width;
    const int H = gbuffer.height;
    McImage img{ImageF(W, H, 3), ImageF(W, H, 3), ImageF(W, H, 3)};
    parallel_for(0, std::size_t(W) * H, [&](std::size_t idx) {
        const int x = int(idx % std::size_t(W));
        const int y = int(idx / std::size_t(W));
        if (!gbuffer.covered(x, y)) return;
        const Vec3 pos = gbuffer.position.rgb(x, y).matrix();
        const Vec3 n = gbuffer.normal.rgb(x, y).matrix().normalized();
        const Vec3 v = (camera.position - pos).normalized();
        const auto r = integrate_pixel(n, v, material, gbuffer.albedo.rgb(x, y), env, cfg, idx);
        img.color.set_rgb(x, y, r.color());
        img.diffuse.set_rgb(x, y, r.diffuse);
        img.specular.set_rgb(x, y, r.specular);
    });
    return img;
}

OracleComparison compare_with_oracle(const ImageF& color, const ImageF& oracle, const GBuffer& gbuffer,
                                     const Camera& camera, double min_cos)
{
    if (color.width() != gbuffer.width || color.height() != gbuffer.height || !color.same_shape(oracle))
        throw DimensionError("oracle comparison resolution mismatch");
    OracleComparison out;
    for (int y = 0; y < gbuffer.height; ++y) {
        for (int x = 0; x < gbuffer.width; ++x) {
            if (!gbuffer.covered(x, y)) continue;
            const Vec3 pos = gbuffer.position.rgb(x, y).matrix();
            const Vec3 n = gbuffer.normal.rgb(x, y).matrix().normalized();
            if (n.dot((camera.position - pos).normalized()) < min_cos) continue;
            const Rgb ref = oracle.rgb(x, y);
            const double denom = std::max(ref.abs().sum(), 1e-12);
            out.per_pixel.push_back((color.rgb(x, y) - ref).abs().sum() / denom);
        }
    }
    out.masked_pixel_count = out.per_pixel.size();
    if (!out.per_pixel.empty()) {
        std::vector<double> sorted = out.per_pixel;
        std::sort(sorted.begin(), sorted.end());
        double sum = 0.0;
        for (double v : sorted) sum += v;
        out.mean_rel_l1 = sum / double(sorted.size());
        out.p95_rel_l1 = sorted[std::min(sorted.size() - 1, std::size_t(std::ceil(0.95 * double(sorted.size()))) - 1)];
    }
    return out;
}

} // namespace psr
