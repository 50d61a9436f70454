#pragma once

#include "psr/brdf.hpp"
#include "psr/envlight.hpp"
#include "psr/raster.hpp"

#include <cstdint>

namespace psr {

/// Cosine-hemisphere sampling for the diffuse lobe, GGX half-vector
/// importance sampling for the specular lobe. Environment lookups are
/// bilinear on the raw map so the estimate is independent of prefiltering.
struct McConfig
{
    int samples = 2048; // per pixel per lobe
    std::uint64_t seed = 0;
};

struct McResult
{
    Rgb diffuse = Rgb::Zero();
    Rgb specular = Rgb::Zero();

    Rgb color() const { return diffuse + specular; }
};

/// Unbiased single-bounce estimate of the diffuse and specular outgoing
/// radiance at one surface point. `stream` selects the keyed RNG stream
/// (the pixel index when called from integrate_image).
McResult integrate_pixel(const Vec3& n, const Vec3& v, const Material& material, const Rgb& albedo,
                         const EnvironmentMap& env, const McConfig& cfg, std::uint64_t stream = 0);

/// Specular lobe only, for an arbitrary base reflectance F0.
Rgb integrate_specular(const Vec3& n, const Vec3& v, double roughness, const Rgb& f0,
                       const EnvironmentMap& env, const McConfig& cfg, std::uint64_t stream = 0);

struct McImage
{
    ImageF color;
    ImageF diffuse;
    ImageF specular;
};

McImage integrate_image(const GBuffer& gbuffer, const Material& material, const EnvironmentMap& env,
                        const Camera& camera, const McConfig& cfg);

/// Per-pixel relative L1, sum|C - C_ref| / sum|C_ref| over channels, for
/// masked pixels whose n.v is at least `min_cos`.
struct OracleComparison
{
    double mean_rel_l1 = 0.0;
    double p95_rel_l1 = 0.0;
    std::size_t masked_pixel_count = 0;
    std::vector<double> per_pixel;
};

OracleComparison compare_with_oracle(const ImageF& color, const ImageF& oracle, const GBuffer& gbuffer,
                                     const Camera& camera, double min_cos = 0.1);

} // namespace psr
