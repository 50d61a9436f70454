#include "psr/envlight.hpp"

#include "psr/brdf.hpp"
#include "psr/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace psr {

// ---------------------------------------------------------------------------
// EnvironmentMap

EnvironmentMap::EnvironmentMap(ImageF pixels) : pixels_(std::move(pixels))
{
    if (pixels_.width() != 2 * pixels_.height() || pixels_.height() <= 0)
        throw DataError("environment map must have width == 2 * height");
    if (pixels_.channels() != 3) throw DataError("environment map must be RGB");
    for (float v : pixels_.data())
        if (!std::isfinite(v) || v < 0.0f) throw DataError("environment map has negative or non-finite radiance");
}

Rgb EnvironmentMap::sample(const Vec3& dir) const { return sample_equirect(pixels_, dir); }

EnvironmentMap EnvironmentMap::scaled(double factor) const
{
    ImageF img = pixels_;
    for (auto& v : img.data()) v = float(double(v) * factor);
    return EnvironmentMap(std::move(img));
}

EnvironmentMap make_procedural_environment(int width, std::uint64_t seed)
{
    if (width < 4 || width % 2 != 0) throw ConfigError("procedural environment width must be even and >= 4");
    const int height = width / 2;
    KeyedRng rng{seed, 0x70726f63ULL};
    struct Lobe
    {
        Vec3 dir;
        Rgb color;
        double sharpness;
    };
    std::vector<Lobe> lobes;
    const int count = 3 + int(rng.below(3));
    for (int i = 0; i < count; ++i) {
        const double z = 2.0 * rng.uniform() - 1.0;
        const double phi = 2.0 * kPi * rng.uniform();
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        Lobe l;
        l.dir = Vec3(s * std::cos(phi), z, s * std::sin(phi));
        l.color = Rgb(0.5 + 3.5 * rng.uniform(), 0.5 + 3.5 * rng.uniform(), 0.5 + 3.5 * rng.uniform());
        l.sharpness = 4.0 + 60.0 * rng.uniform();
        lobes.push_back(l);
    }
    const Rgb sky(0.3 + 0.4 * rng.uniform(), 0.4 + 0.4 * rng.uniform(), 0.6 + 0.4 * rng.uniform());
    const Rgb ground(0.1 + 0.2 * rng.uniform(), 0.1 + 0.15 * rng.uniform(), 0.05 + 0.1 * rng.uniform());

    ImageF img(width, height, 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec3 d = texel_to_direction(x + 0.5, y + 0.5, width, height);
            const double t = 0.5 * (d.y() + 1.0);
            Rgb c = ground + (sky - ground) * t;
            for (const auto& l : lobes) c += l.color * std::exp(l.sharpness * (d.dot(l.dir) - 1.0));
            img.set_rgb(x, y, c);
        }
    }
    return EnvironmentMap(std::move(img));
}

EnvironmentMap load_envmap(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw ConfigError("env map not found: " + path.string());
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    ImageF img;
    if (ext == ".hdr" || ext == ".pic") img = read_rgbe(path);
    else if (ext == ".pfm") img = read_pfm(path);
    else throw FormatError("unsupported environment format: " + path.string());
    if (img.channels() == 1) {
        ImageF rgb(img.width(), img.height(), 3);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) rgb.set_rgb(x, y, img.rgb(x, y));
        img = std::move(rgb);
    }
    if (img.width() != 2 * img.height())
        throw FormatError("environment map dimension mismatch: width must equal 2 * height");
    return EnvironmentMap(std::move(img));
}

// ---------------------------------------------------------------------------
// Equirect mapping

Vec2 direction_to_texel(const Vec3& dir, int width, int height)
{
    const double u = (std::atan2(dir.x(), -dir.z()) / (2.0 * kPi) + 0.5) * width;
    const double v = std::acos(std::clamp(dir.y(), -1.0, 1.0)) / kPi * height;
    return {u, v};
}

Vec3 texel_to_direction(double u, double v, int width, int height)
{
    const double phi = (u / width - 0.5) * 2.0 * kPi;
    const double theta = v / height * kPi;
    const double s = std::sin(theta);
    return {s * std::sin(phi), std::cos(theta), -s * std::cos(phi)};
}

namespace {

inline int wrap(int x, int w)
{
    const int r = x % w;
    return r < 0 ? r + w : r;
}

Rgb bilinear_equirect(const ImageF& img, double u, double v)
{
    const int w = img.width();
    const int h = img.height();
    v = std::clamp(v, 0.5, h - 0.5);
    const double fx = u - 0.5;
    const double fy = v - 0.5;
    const double x0f = std::floor(fx);
    const double y0f = std::floor(fy);
    const double tx = fx - x0f;
    const double ty = fy - y0f;
    const int x0 = wrap(int(x0f), w);
    const int x1 = wrap(int(x0f) + 1, w);
    const int y0 = std::clamp(int(y0f), 0, h - 1);
    const int y1 = std::clamp(int(y0f) + 1, 0, h - 1);
    const Rgb top = img.rgb(x0, y0) * (1.0 - tx) + img.rgb(x1, y0) * tx;
    const Rgb bot = img.rgb(x0, y1) * (1.0 - tx) + img.rgb(x1, y1) * tx;
    return top * (1.0 - ty) + bot * ty;
}

} // namespace

Rgb sample_equirect(const ImageF& img, const Vec3& dir)
{
    const Vec2 uv = direction_to_texel(dir, img.width(), img.height());
    return bilinear_equirect(img, uv.x(), uv.y());
}

ImageF box_downsample(const ImageF& img)
{
    const int w = std::max(1, img.width() / 2);
    const int h = std::max(1, img.height() / 2);
    ImageF out(w, h, img.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x0 = std::min(2 * x, img.width() - 1), x1 = std::min(2 * x + 1, img.width() - 1);
            const int y0 = std::min(2 * y, img.height() - 1), y1 = std::min(2 * y + 1, img.height() - 1);
            for (int c = 0; c < img.channels(); ++c) {
                const double s = double(img.at(x0, y0, c)) + img.at(x1, y0, c) +
                                 img.at(x0, y1, c) + img.at(x1, y1, c);
                out.at(x, y, c) = float(s * 0.25);
            }
        }
    }
    return out;
}

ImageF resample_equirect(const ImageF& img, int width)
{
    ImageF src = img;
    while (src.width() >= 2 * width && src.height() % 2 == 0 && src.width() % 2 == 0)
        src = box_downsample(src);
    if (src.width() == width) return src;
    const int height = width / 2;
    ImageF out(width, height, src.channels());
    const double sx = double(src.width()) / width;
    const double sy = double(src.height()) / height;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out.set_rgb(x, y, bilinear_equirect(src, (x + 0.5) * sx, (y + 0.5) * sy));
    return out;
}

// ---------------------------------------------------------------------------
// Pyramid

EquirectPyramid::EquirectPyramid(const ImageF& base)
{
    levels_.push_back(base);
    while (levels_.back().height() >= 2 && levels_.back().width() % 2 == 0 &&
           levels_.back().height() % 2 == 0) {
        levels_.push_back(box_downsample(levels_.back()));
    }
}

double EquirectPyramid::base_texel_solid_angle() const
{
    return 4.0 * kPi / double(levels_.front().pixel_count());
}

Rgb EquirectPyramid::sample(const Vec3& dir, double lod) const
{
    const double max_lod = double(levels_.size() - 1);
    lod = std::clamp(lod, 0.0, max_lod);
    const int l0 = int(std::floor(lod));
    const int l1 = std::min(l0 + 1, int(levels_.size()) - 1);
    const double t = lod - l0;
    const Rgb a = sample_equirect(levels_[std::size_t(l0)], dir);
    if (t <= 0.0 || l1 == l0) return a;
    return a * (1.0 - t) + sample_equirect(levels_[std::size_t(l1)], dir) * t;
}

// ---------------------------------------------------------------------------
// Prefiltering

void PrefilterConfig::validate() const
{
    if (levels < 2) throw ConfigError("prefilter requires levels >= 2");
    if (samples_per_texel < 64) throw ConfigError("prefilter requires samples_per_texel >= 64");
    if (base_width < 16 || base_width % 2 != 0) throw ConfigError("prefilter base width must be even and >= 16");
    if (diffuse_width < 2 || diffuse_width > 64 || diffuse_width % 2 != 0)
        throw ConfigError("diffuse map width must be even and <= 64");
    if (diffuse_samples < 1) throw ConfigError("diffuse samples must be positive");
}

double PrefilteredEnvironment::level_roughness(int level) const
{
    return levels() <= 1 ? 0.0 : double(level) / double(levels() - 1);
}

namespace {

// Cranley-Patterson rotated Hammersley point i of n.
inline Vec2 rotated_hammersley(std::uint32_t i, std::uint32_t n, const Vec2& shift)
{
    double a = (i + 0.5) / n + shift.x();
    double b = radical_inverse2(i) + shift.y();
    a -= std::floor(a);
    b -= std::floor(b);
    return {a, b};
}

// Stream tags keep the keyed RNG streams of different products disjoint.
constexpr std::uint64_t kSpecularStream = 0x5350u;
constexpr std::uint64_t kDiffuseStream = 0x4446u;
constexpr std::uint64_t kDfgStream = 0x4c55u;

} // namespace

std::vector<ImageF> prefilter_specular(const EnvironmentMap& env, int levels,
                                       int samples_per_texel, std::uint64_t seed,
                                       int base_width)
{
    if (levels < 2) throw ConfigError("prefilter requires levels >= 2");
    if (samples_per_texel < 64) throw ConfigError("prefilter requires samples_per_texel >= 64");

    std::vector<ImageF> chain;
    chain.push_back(resample_equirect(env.pixels(), base_width));
    const EquirectPyramid pyramid(env.pixels());
    const double texel_sa = pyramid.base_texel_solid_angle();
    const auto n = std::uint32_t(samples_per_texel);

    for (int level = 1; level < levels; ++level) {
        const ImageF& prev = chain.back();
        const int w = std::max(8, prev.width() / 2);
        const int h = w / 2;
        const double roughness = double(level) / double(levels - 1);
        const double alpha = roughness * roughness;
        ImageF out(w, h, 3);

        parallel_for(0, std::size_t(w) * h, [&](std::size_t idx) {
            const int x = int(idx % std::size_t(w));
            const int y = int(idx / std::size_t(w));
            const Vec3 d = texel_to_direction(x + 0.5, y + 0.5, w, h);
            const Mat3 frame = tangent_frame(d);
            KeyedRng rng{seed, kSpecularStream, std::uint64_t(level), idx};
            const Vec2 shift(rng.uniform(), rng.uniform());

            Rgb sum = Rgb::Zero();
            double weight = 0.0;
            for (std::uint32_t i = 0; i < n; ++i) {
                const Vec2 u = rotated_hammersley(i, n, shift);
                const Vec3 h_local = sample_ggx_half_local(u.x(), u.y(), alpha);
                const Vec3 l_local = 2.0 * h_local.z() * h_local - Vec3::UnitZ();
                const double nl = l_local.z();
                if (nl <= 0.0) continue;
                // With n = v the light-direction pdf reduces to D / 4.
                const double pdf = ggx_ndf(roughness, h_local.z()) * 0.25;
                const double sample_sa = 1.0 / (double(n) * std::max(pdf, 1e-12));
                const double lod = std::max(0.0, 0.5 * std::log2(sample_sa / texel_sa) + 1.0);
                sum += pyramid.sample(frame * l_local, lod) * nl;
                weight += nl;
            }
            out.set_rgb(x, y, weight > 0.0 ? Rgb(sum / weight) : Rgb(pyramid.sample(d, 0.0)));
        });
        chain.push_back(std::move(out));
    }
    return chain;
}

ImageF compute_irradiance(const EnvironmentMap& env, int width, int samples, std::uint64_t seed)
{
    if (width < 2 || width > 64 || width % 2 != 0) throw ConfigError("diffuse map width must be even and <= 64");
    if (samples < 1) throw ConfigError("irradiance samples must be positive");
    const int height = width / 2;
    const EquirectPyramid pyramid(env.pixels());
    const double texel_sa = pyramid.base_texel_solid_angle();
    const auto n = std::uint32_t(samples);
    ImageF out(width, height, 3);

    parallel_for(0, std::size_t(width) * height, [&](std::size_t idx) {
        const int x = int(idx % std::size_t(width));
        const int y = int(idx / std::size_t(width));
        const Vec3 normal = texel_to_direction(x + 0.5, y + 0.5, width, height);
        const Mat3 frame = tangent_frame(normal);
        KeyedRng rng{seed, kDiffuseStream, idx};
        const Vec2 shift(rng.uniform(), rng.uniform());
        Rgb sum = Rgb::Zero();
        for (std::uint32_t i = 0; i < n; ++i) {
            const Vec2 u = rotated_hammersley(i, n, shift);
            const Vec3 l_local = sample_cosine_local(u.x(), u.y());
            const double pdf = std::max(l_local.z(), 1e-6) * kInvPi;
            const double sample_sa = 1.0 / (double(n) * pdf);
            const double lod = std::max(0.0, 0.5 * std::log2(sample_sa / texel_sa));
            sum += pyramid.sample(frame * l_local, lod);
        }
        out.set_rgb(x, y, sum / double(n));
    });
    return out;
}

PrefilteredEnvironment prefilter(const EnvironmentMap& env, const PrefilterConfig& config)
{
    config.validate();
    PrefilteredEnvironment pre;
    pre.specular_mips = prefilter_specular(env, config.levels, config.samples_per_texel,
                                           config.seed, config.base_width);
    pre.diffuse_map = compute_irradiance(env, config.diffuse_width, config.diffuse_samples, config.seed);
    pre.meta.config = config;
    pre.meta.source_hash = content_hash(env.pixels());
    return pre;
}

Rgb sample_prefiltered(const PrefilteredEnvironment& pre, const Vec3& dir, double roughness)
{
    const int levels = pre.levels();
    const double x = clamp01(roughness) * double(levels - 1);
    const int l0 = std::min(int(std::floor(x)), levels - 1);
    const int l1 = std::min(l0 + 1, levels - 1);
    const double t = x - l0;
    const Rgb a = sample_equirect(pre.specular_mips[std::size_t(l0)], dir);
    if (t <= 0.0 || l0 == l1) return a;
    const Rgb b = sample_equirect(pre.specular_mips[std::size_t(l1)], dir);
    return a * (1.0 - t) + b * t;
}

Rgb sample_diffuse(const PrefilteredEnvironment& pre, const Vec3& normal)
{
    return sample_equirect(pre.diffuse_map, normal);
}

// ---------------------------------------------------------------------------
// DFG lookup table

DfgLut::DfgLut(ImageF table) : table_(std::move(table))
{
    if (table_.channels() != 3 || table_.width() < 2 || table_.height() < 2)
        throw DataError("dfg table must be RGB and at least 2x2");
    if (!all_finite(table_)) throw DataError("dfg table has non-finite entries");
}

double DfgLut::node_cos(int i, int n)
{
    return std::max(double(i) / double(n - 1), kMinCosine);
}

double DfgLut::node_roughness(int j, int n) { return double(j) / double(n - 1); }

Vec2 DfgLut::node(int cos_index, int rough_index) const
{
    return {table_.at(cos_index, rough_index, 0), table_.at(cos_index, rough_index, 1)};
}

Vec2 DfgLut::lookup(double cos_nv, double roughness) const
{
    const int nc = table_.width();
    const int nr = table_.height();
    const double fx = clamp01(cos_nv) * (nc - 1);
    const double fy = clamp01(roughness) * (nr - 1);
    const int x0 = std::min(int(fx), nc - 2);
    const int y0 = std::min(int(fy), nr - 2);
    const double tx = fx - x0;
    const double ty = fy - y0;
    const Vec2 top = node(x0, y0) * (1 - tx) + node(x0 + 1, y0) * tx;
    const Vec2 bot = node(x0, y0 + 1) * (1 - tx) + node(x0 + 1, y0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
}

Vec2 integrate_dfg(double cos_nv, double roughness, int samples, std::uint64_t seed,
                   std::uint64_t stream)
{
    const double nv = clamp_cosine(cos_nv);
    const Vec3 v(std::sqrt(std::max(0.0, 1.0 - nv * nv)), 0.0, nv);
    const double alpha = roughness * roughness;
    KeyedRng rng{seed, kDfgStream, stream};
    const Vec2 shift(rng.uniform(), rng.uniform());
    const auto n = std::uint32_t(samples);
    double f1 = 0.0;
    double f2 = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const Vec2 u = rotated_hammersley(i, n, shift);
        const Vec3 h = sample_ggx_half_local(u.x(), u.y(), alpha);
        const double vh = v.dot(h);
        const Vec3 l = 2.0 * vh * h - v;
        const double nl = l.z();
        if (nl <= 0.0 || vh <= 0.0) continue;
        const double nh = std::max(h.z(), 1e-12);
        const double g = geometry_smith(roughness, nv, nl);
        // BRDF * cos / pdf with the D terms cancelled: G (v.h) / ((n.v)(n.h)).
        const double g_vis = g * vh / (nv * nh);
        const double t = 1.0 - vh;
        const double fc = t * t * t * t * t;
        f1 += (1.0 - fc) * g_vis;
        f2 += fc * g_vis;
    }
    return {f1 / n, f2 / n};
}

DfgLut compute_dfg_lut(int resolution, int samples, std::uint64_t seed)
{
    if (resolution < 2) throw ConfigError("dfg resolution must be >= 2");
    if (samples < 1024) throw ConfigError("dfg lut requires >= 1024 samples per entry");
    ImageF table(resolution, resolution, 3);
    parallel_for(0, std::size_t(resolution) * resolution, [&](std::size_t idx) {
        const int i = int(idx % std::size_t(resolution));
        const int j = int(idx / std::size_t(resolution));
        const Vec2 f = integrate_dfg(DfgLut::node_cos(i, resolution),
                                     DfgLut::node_roughness(j, resolution), samples, seed, idx);
        table.at(i, j, 0) = float(f.x());
        table.at(i, j, 1) = float(f.y());
        table.at(i, j, 2) = 0.0f;
    });
    return DfgLut(std::move(table));
}

// ---------------------------------------------------------------------------
// Persistence

std::string content_hash(const ImageF& img)
{
    const auto bytes = encode_pfm(img);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void save_prefiltered(const std::filesystem::path& dir, const PrefilteredEnvironment& pre)
{
    std::filesystem::create_directories(dir);
    nlohmann::json resolutions = nlohmann::json::array();
    nlohmann::json roughness = nlohmann::json::array();
    for (int l = 0; l < pre.levels(); ++l) {
        const auto& img = pre.specular_mips[std::size_t(l)];
        write_pfm(dir / ("specular_" + std::to_string(l) + ".pfm"), img);
        resolutions.push_back({img.width(), img.height()});
        roughness.push_back(pre.level_roughness(l));
    }
    write_pfm(dir / "diffuse.pfm", pre.diffuse_map);
    const auto& c = pre.meta.config;
    nlohmann::json j = {
        {"levels", pre.levels()},
        {"resolutions", resolutions},
        {"diffuse_resolution", {pre.diffuse_map.width(), pre.diffuse_map.height()}},
        {"roughness_mapping", "linear"},
        {"level_roughness", roughness},
        {"seed", c.seed},
        {"base_width", c.base_width},
        {"samples_per_texel", c.samples_per_texel},
        {"diffuse_samples", c.diffuse_samples},
        {"source_hash", pre.meta.source_hash},
    };
    std::ofstream(dir / "chain.json") << j.dump(2) << '\n';
}

PrefilteredEnvironment load_prefiltered(const std::filesystem::path& dir)
{
    const auto sidecar = dir / "chain.json";
    if (!std::filesystem::exists(sidecar)) throw ConfigError("prefiltered chain not found: " + dir.string());
    nlohmann::json j;
    try {
        std::ifstream in(sidecar);
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("chain.json: ") + e.what());
    }
    PrefilteredEnvironment pre;
    try {
        const int levels = j.at("levels").get<int>();
        for (int l = 0; l < levels; ++l)
            pre.specular_mips.push_back(read_pfm(dir / ("specular_" + std::to_string(l) + ".pfm")));
        pre.diffuse_map = read_pfm(dir / "diffuse.pfm");
        auto& c = pre.meta.config;
        c.levels = levels;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.base_width = j.at("base_width").get<int>();
        c.samples_per_texel = j.at("samples_per_texel").get<int>();
        c.diffuse_samples = j.at("diffuse_samples").get<int>();
        c.diffuse_width = pre.diffuse_map.width();
        pre.meta.source_hash = j.at("source_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("chain.json: ") + e.what());
    }
    for (const auto& m : pre.specular_mips)
        if (m.channels() != 3 || m.width() != 2 * m.height()) throw FormatError("bad specular level shape");
    return pre;
}

void save_dfg_lut(const std::filesystem::path& path, const DfgLut& lut)
{
    write_pfm(path, lut.table());
}

DfgLut load_dfg_lut(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw ConfigError("dfg lut not found: " + path.string());
    return DfgLut(read_pfm(path));
}

} // namespace psr
