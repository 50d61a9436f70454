#pragma once

#include "psr/core.hpp"
#include "psr/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace psr {

/// Equirectangular linear-radiance map with width == 2 * height.
class EnvironmentMap
{
public:
    EnvironmentMap() = default;
    /// Throws DataError unless width == 2 * height and all values are finite and >= 0.
    explicit EnvironmentMap(ImageF pixels);

    const ImageF& pixels() const { return pixels_; }
    int width() const { return pixels_.width(); }
    int height() const { return pixels_.height(); }

    /// Bilinear lookup on the raw map (u wraps, v is clamped to texel centers).
    Rgb sample(const Vec3& dir) const;

    EnvironmentMap scaled(double factor) const;

private:
    ImageF pixels_;
};

/// Radiance .hdr or PFM, chosen by extension.
EnvironmentMap load_envmap(const std::filesystem::path& path);

/// Deterministic synthetic sky: a vertical gradient, a ground tone, and a few
/// soft colored lobes placed by `seed`. Useful when no captured maps exist.
EnvironmentMap make_procedural_environment(int width, std::uint64_t seed);

/// Continuous texel coordinates for a unit direction:
///   u = (atan2(x, -z) / 2pi + 0.5) * width,  v = acos(y) / pi * height.
Vec2 direction_to_texel(const Vec3& dir, int width, int height);
Vec3 texel_to_direction(double u, double v, int width, int height);

/// Bilinear equirect lookup; u wraps, v is clamped to [0.5, height - 0.5].
Rgb sample_equirect(const ImageF& img, const Vec3& dir);

/// Box-filtered pyramid of an equirect map used for filtered importance sampling.
class EquirectPyramid
{
public:
    explicit EquirectPyramid(const ImageF& base);
    /// Trilinear lookup at a fractional level of detail.
    Rgb sample(const Vec3& dir, double lod) const;
    double base_texel_solid_angle() const;
    int levels() const { return int(levels_.size()); }
    const ImageF& level(int i) const { return levels_[std::size_t(i)]; }

private:
    std::vector<ImageF> levels_;
};

/// Halves width and height with a 2x2 box filter.
ImageF box_downsample(const ImageF& img);
/// Equirect resample to width x width/2 (box reduction, then bilinear).
ImageF resample_equirect(const ImageF& img, int width);

struct PrefilterConfig
{
    int levels = 6;
    int base_width = 256;
    int samples_per_texel = 512;
    int diffuse_width = 64;
    int diffuse_samples = 1024;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PrefilterMeta
{
    PrefilterConfig config;
    std::string source_hash;
};

/// Split-sum lighting: roughness-indexed specular chain plus diffuse irradiance.
struct PrefilteredEnvironment
{
    std::vector<ImageF> specular_mips;
    ImageF diffuse_map;
    PrefilterMeta meta;

    int levels() const { return int(specular_mips.size()); }
    /// Linear mapping, level l holds roughness l / (L - 1).
    double level_roughness(int level) const;
};

/// Level l is the GGX importance-sampled, n.l weighted average of the source
/// about each texel direction with roughness l / (levels - 1) and n = v = d.
/// Level 0 is the resampled source.
std::vector<ImageF> prefilter_specular(const EnvironmentMap& env, int levels,
                                       int samples_per_texel, std::uint64_t seed,
                                       int base_width = 256);

/// Cosine-weighted estimate of the integral of L(w)(w.n)/pi per normal direction.
ImageF compute_irradiance(const EnvironmentMap& env, int width, int samples,
                          std::uint64_t seed);

PrefilteredEnvironment prefilter(const EnvironmentMap& env, const PrefilterConfig& config);

/// Trilinear lookup in the specular chain at roughness in [0, 1].
Rgb sample_prefiltered(const PrefilteredEnvironment& pre, const Vec3& dir, double roughness);
/// Bilinear lookup in the diffuse irradiance map.
Rgb sample_diffuse(const PrefilteredEnvironment& pre, const Vec3& normal);

/// Split-sum BRDF integral table. Node (i, j) holds cos_nv = max(i/(N-1), 1e-4)
/// and roughness = j/(N-1); channel R stores the F0 scale F1, G the bias F2.
class DfgLut
{
public:
    DfgLut() = default;
    explicit DfgLut(ImageF table);

    int cos_resolution() const { return table_.width(); }
    int roughness_resolution() const { return table_.height(); }
    const ImageF& table() const { return table_; }

    /// Bilinear lookup with clamp at the table edges.
    Vec2 lookup(double cos_nv, double roughness) const;
    Vec2 node(int cos_index, int rough_index) const;

    static double node_cos(int i, int n);
    static double node_roughness(int j, int n);

private:
    ImageF table_;
};

/// GGX importance-sampled (F1, F2) per (cos_nv, roughness) node.
DfgLut compute_dfg_lut(int resolution, int samples, std::uint64_t seed);
/// Same estimator for a single (cos_nv, roughness) pair.
Vec2 integrate_dfg(double cos_nv, double roughness, int samples, std::uint64_t seed,
                   std::uint64_t stream = 0);

/// FNV-1a over the PFM encoding of the image, as 16 hex digits.
std::string content_hash(const ImageF& img);

/// Writes specular_<l>.pfm, diffuse.pfm and chain.json into dir.
void save_prefiltered(const std::filesystem::path& dir, const PrefilteredEnvironment& pre);
PrefilteredEnvironment load_prefiltered(const std::filesystem::path& dir);

void save_dfg_lut(const std::filesystem::path& path, const DfgLut& lut);
DfgLut load_dfg_lut(const std::filesystem::path& path);

} // namespace psr
