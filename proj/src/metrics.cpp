#include "psr/metrics.hpp"

#include "psr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace psr {

namespace {

constexpr std::uint64_t kSurfaceStream = 0x73757266ULL;

void require_same_shape(const ImageF& a, const ImageF& b, const char* what)
{
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
        throw DimensionError(std::string(what) + ": resolution mismatch");
}

bool in_mask(const ImageF* mask, int x, int y) { return !mask || mask->at(x, y) > 0.5f; }

// Normalized 1D Gaussian taps, radius 5.
std::array<double, 11> gaussian_taps()
{
    std::array<double, 11> w{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[std::size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[std::size_t(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable Gaussian blur of a single-channel plane. Taps falling outside the
// image are dropped and the remaining weights renormalized.
std::vector<double> blur(const std::vector<double>& src, int w, int h)
{
    static const auto taps = gaussian_taps();
    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0, ws = 0.0;
            for (int k = -5; k <= 5; ++k) {
                const int xx = x + k;
                if (xx < 0 || xx >= w) continue;
                s += taps[std::size_t(k + 5)] * src[std::size_t(y) * w + xx];
                ws += taps[std::size_t(k + 5)];
            }
            tmp[std::size_t(y) * w + x] = s / ws;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0, ws = 0.0;
            for (int k = -5; k <= 5; ++k) {
                const int yy = y + k;
                if (yy < 0 || yy >= h) continue;
                s += taps[std::size_t(k + 5)] * tmp[std::size_t(yy) * w + x];
                ws += taps[std::size_t(k + 5)];
            }
            out[std::size_t(y) * w + x] = s / ws;
        }
    }
    return out;
}

struct CellKey
{
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash
{
    std::size_t operator()(const CellKey& k) const
    {
        return std::size_t(mix64(std::uint64_t(k.x) ^ mix64(std::uint64_t(k.y) ^ mix64(std::uint64_t(k.z)))));
    }
};

} // namespace

double display_value(double linear) { return std::pow(clamp01(linear), 1.0 / 2.2); }

double mse(const ImageF& a, const ImageF& b, const ImageF* mask)
{
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            if (!in_mask(mask, x, y)) continue;
            for (int c = 0; c < a.channels(); ++c) {
                const double d = double(a.at(x, y, c)) - double(b.at(x, y, c));
                sum += d * d;
            }
            n += std::size_t(a.channels());
        }
    }
    return n ? sum / double(n) : 0.0;
}

ImageScores image_metrics_display(const ImageF& pred, const ImageF& gt, const ImageF* mask)
{
    require_same_shape(pred, gt, "image_metrics");
    if (mask && (mask->width() != pred.width() || mask->height() != pred.height()))
        throw DimensionError("image_metrics: mask resolution mismatch");

    ImageScores s;
    const double err = mse(pred, gt, mask);
    s.psnr = err > 0.0 ? std::min(kPsnrCap, 10.0 * std::log10(1.0 / err)) : kPsnrCap;

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int w = pred.width();
    const int h = pred.height();
    const std::size_t n = std::size_t(w) * h;
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < pred.channels(); ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int px = int(i % std::size_t(w));
            const int py = int(i / std::size_t(w));
            x[i] = pred.at(px, py, c);
            y[i] = gt.at(px, py, c);
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = blur(x, w, h);
        const auto my = blur(y, w, h);
        const auto sxx = blur(xx, w, h);
        const auto syy = blur(yy, w, h);
        const auto sxy = blur(xy, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_mask(mask, int(i % std::size_t(w)), int(i / std::size_t(w)))) continue;
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    s.ssim = count ? total / double(count) : 1.0;
    return s;
}

ImageScores image_metrics(const ImageF& pred, const ImageF& gt, const ImageF* mask)
{
    require_same_shape(pred, gt, "image_metrics");
    ImageF p = pred, g = gt;
    for (auto& v : p.data()) v = float(display_value(v));
    for (auto& v : g.data()) v = float(display_value(v));
    return image_metrics_display(p, g, mask);
}

GeometryLosses geometry_losses(const RenderBuffers& pred, const RenderBuffers& gt)
{
    if (pred.width != gt.width || pred.height != gt.height) throw DimensionError("geometry_losses: resolution mismatch");
    GeometryLosses out;
    std::size_t n = 0;
    double mask_sq = 0.0;
    for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
            const double dm = double(pred.mask.at(x, y)) - double(gt.mask.at(x, y));
            mask_sq += dm * dm;
            if (!pred.covered(x, y)) continue;
            ++n;
            out.normal += 1.0 - pred.normal.rgb(x, y).matrix().dot(gt.normal.rgb(x, y).matrix());
            out.depth_l1 += std::abs(double(pred.depth.at(x, y)) - double(gt.depth.at(x, y)));
        }
    }
    if (n) {
        out.normal /= double(n);
        out.depth_l1 /= double(n);
    }
    const double pixels = double(pred.width) * double(pred.height);
    out.mask_mse = pixels > 0.0 ? mask_sq / pixels : 0.0;
    return out;
}

double weighted_loss(const LossTerms& t, const LossWeights& w)
{
    return t.color_mse + t.albedo_mse + t.l_spec_mse + t.l_diff_mse + w.normal * t.normal +
           w.depth * t.depth_l1 + w.mask * t.mask_mse;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed)
{
    if (mesh.faces.empty()) throw DataError("cannot sample an empty mesh");
    std::vector<double> cdf;
    cdf.reserve(mesh.faces.size());
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        total += 0.5 * (mesh.vertices[std::size_t(f[1])] - mesh.vertices[std::size_t(f[0])])
                           .cross(mesh.vertices[std::size_t(f[2])] - mesh.vertices[std::size_t(f[0])])
                           .norm();
        cdf.push_back(total);
    }
    if (!(total > 0.0)) throw DegeneracyError("mesh has zero surface area");

    std::vector<Vec3> pts(count);
    parallel_for(0, count, [&](std::size_t i) {
        KeyedRng rng{seed, kSurfaceStream, i};
        const double u = rng.uniform() * total;
        const auto face = std::size_t(std::min<std::ptrdiff_t>(
            std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), std::ptrdiff_t(cdf.size()) - 1));
        const auto& f = mesh.faces[face];
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const double b0 = 1.0 - su;
        const double b1 = su * (1.0 - v);
        const double b2 = su * v;
        pts[i] = b0 * mesh.vertices[std::size_t(f[0])] + b1 * mesh.vertices[std::size_t(f[1])] +
                 b2 * mesh.vertices[std::size_t(f[2])];
    });
    return pts;
}

std::vector<double> nearest_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to, double cell_size)
{
    if (to.empty()) throw DataError("nearest-neighbor target set is empty");
    if (!(cell_size > 0.0)) throw ConfigError("cell size must be positive");

    auto key_of = [&](const Vec3& p) {
        return CellKey{std::int64_t(std::floor(p.x() / cell_size)), std::int64_t(std::floor(p.y() / cell_size)),
                       std::int64_t(std::floor(p.z() / cell_size))};
    };
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
    CellKey lo = key_of(to.front()), hi = lo;
    for (std::size_t i = 0; i < to.size(); ++i) {
        const CellKey k = key_of(to[i]);
        grid[k].push_back(i);
        lo = {std::min(lo.x, k.x), std::min(lo.y, k.y), std::min(lo.z, k.z)};
        hi = {std::max(hi.x, k.x), std::max(hi.y, k.y), std::max(hi.z, k.z)};
    }

    std::vector<double> out(from.size());
    parallel_for(0, from.size(), [&](std::size_t i) {
        const Vec3& p = from[i];
        const CellKey c = key_of(p);
        // Rings beyond this radius cover no occupied cell.
        const std::int64_t max_ring = std::max({std::abs(c.x - lo.x), std::abs(c.x - hi.x), std::abs(c.y - lo.y),
                                                std::abs(c.y - hi.y), std::abs(c.z - lo.z), std::abs(c.z - hi.z)});
        double best = std::numeric_limits<double>::infinity(); // squared
        for (std::int64_t r = 0; r <= max_ring; ++r) {
            // Any point in ring r is at least (r - 1) * cell_size away.
            const double reach = double(std::max<std::int64_t>(r - 1, 0)) * cell_size;
            if (r > 0 && reach * reach >= best) break;
            for (std::int64_t dx = -r; dx <= r; ++dx) {
                for (std::int64_t dy = -r; dy <= r; ++dy) {
                    for (std::int64_t dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                        if (it == grid.end()) continue;
                        for (std::size_t j : it->second) best = std::min(best, (to[j] - p).squaredNorm());
                    }
                }
            }
        }
        out[i] = std::sqrt(best);
    });
    return out;
}

ChamferScore chamfer_fscore_points(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double threshold)
{
    if (a.empty() || b.empty()) throw DataError("chamfer requires non-empty point sets");
    const double cell = threshold > 0.0 ? threshold : 0.1;
    const auto dab = nearest_distances(a, b, cell);
    const auto dba = nearest_distances(b, a, cell);
    ChamferScore s;
    double sa = 0.0, sb = 0.0;
    std::size_t ha = 0, hb = 0;
    for (double d : dab) {
        sa += d;
        ha += d < threshold;
    }
    for (double d : dba) {
        sb += d;
        hb += d < threshold;
    }
    s.chamfer = sa / double(a.size()) + sb / double(b.size());
    s.precision = double(ha) / double(a.size());
    s.recall = double(hb) / double(b.size());
    s.fscore = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

ChamferScore chamfer_fscore(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_points, double threshold,
                            std::uint64_t seed)
{
    if (a.faces.empty() || b.faces.empty()) throw DataError("chamfer requires non-empty meshes");
    if (n_points == 0) throw ConfigError("point count must be positive");
    return chamfer_fscore_points(sample_surface(a, n_points, seed), sample_surface(b, n_points, seed), threshold);
}

nlohmann::json MetricReport::to_json() const
{
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        if (v) return *v;
        return nullptr;
    };
    return {
        {"psnr", opt(psnr)},
        {"ssim", opt(ssim)},
        {"lpips", nullptr},
        {"masked_normal_loss", opt(masked_normal_loss)},
        {"masked_depth_l1", opt(masked_depth_l1)},
        {"mask_mse", opt(mask_mse)},
        {"chamfer", opt(chamfer)},
        {"fscore_01", opt(fscore_01)},
        {"weighted_loss", opt(weighted_loss)},
        {"conventions",
         {{"image_space", "display: clamp to [0,1] then x^(1/2.2)"},
          {"ssim_window", "gaussian 11x11 sigma 1.5, C1=0.01^2, C2=0.03^2"},
          {"psnr_cap_db", kPsnrCap},
          {"weighted_loss_terms", "mse(C)+mse(a)+mse(L_spec)+mse(L_diff)+0.2*normal+0.5*depth+1.0*mask"}}},
    };
}

MetricReport compare_buffers(const RenderBuffers& pred, const RenderBuffers& gt)
{
    if (pred.width != gt.width || pred.height != gt.height) throw DimensionError("buffer resolution mismatch");
    MetricReport r;
    const ImageScores img = image_metrics(pred.color, gt.color);
    r.psnr = img.psnr;
    r.ssim = img.ssim;
    const GeometryLosses g = geometry_losses(pred, gt);
    r.masked_normal_loss = g.normal;
    r.masked_depth_l1 = g.depth_l1;
    r.mask_mse = g.mask_mse;
    LossTerms t;
    t.color_mse = mse(pred.color, gt.color);
    t.albedo_mse = mse(pred.albedo, gt.albedo);
    t.l_spec_mse = mse(pred.l_spec, gt.l_spec);
    t.l_diff_mse = mse(pred.l_diff, gt.l_diff);
    t.normal = g.normal;
    t.depth_l1 = g.depth_l1;
    t.mask_mse = g.mask_mse;
    r.weighted_loss = weighted_loss(t);
    return r;
}

MetricReport compare_meshes(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_points, double threshold,
                            std::uint64_t seed)
{
    const ChamferScore s = chamfer_fscore(pred, gt, n_points, threshold, seed);
    MetricReport r;
    r.chamfer = s.chamfer;
    r.fscore_01 = s.fscore;
    return r;
}

} // namespace psr
