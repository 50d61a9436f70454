#pragma once

#include "psr/scene.hpp"
#include "psr/shade.hpp"

#include <json.hpp>

#include <optional>

namespace psr {

inline constexpr double kPsnrCap = 99.0;

struct ImageScores
{
    double psnr = kPsnrCap;
    double ssim = 1.0;
};

/// Per-pixel tonemap used before image metrics: clamp to [0, 1], then x^(1/2.2).
double display_value(double linear);

/// PSNR (peak 1) and SSIM (11x11 Gaussian window, sigma 1.5) on values
/// already in display space. With a mask, both average over masked pixels.
ImageScores image_metrics_display(const ImageF& pred, const ImageF& gt, const ImageF* mask = nullptr);

/// Tonemaps linear inputs, then scores them.
ImageScores image_metrics(const ImageF& pred, const ImageF& gt, const ImageF* mask = nullptr);

double mse(const ImageF& a, const ImageF& b, const ImageF* mask = nullptr);

struct GeometryLosses
{
    double normal = 0.0; // mean of 1 - n.n_gt over pred-masked pixels
    double depth_l1 = 0.0;
    double mask_mse = 0.0;
};

GeometryLosses geometry_losses(const RenderBuffers& pred, const RenderBuffers& gt);

struct LossTerms
{
    double color_mse = 0.0;
    double albedo_mse = 0.0;
    double l_spec_mse = 0.0;
    double l_diff_mse = 0.0;
    double normal = 0.0;
    double depth_l1 = 0.0;
    double mask_mse = 0.0;
};

struct LossWeights
{
    double normal = 0.2;
    double depth = 0.5;
    double mask = 1.0;
};

double weighted_loss(const LossTerms& terms, const LossWeights& weights = {});

/// Area-weighted uniform surface samples, deterministic in `seed`.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

/// Distances from each point of `from` to its nearest neighbor in `to`.
/// Exact: a uniform hash grid is searched in growing shells until no closer
/// cell can exist.
std::vector<double> nearest_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                                      double cell_size);

struct ChamferScore
{
    double chamfer = 0.0;
    double fscore = 1.0;
    double precision = 1.0;
    double recall = 1.0;
};

ChamferScore chamfer_fscore_points(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double threshold);

ChamferScore chamfer_fscore(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_points = 16384,
                            double threshold = 0.1, std::uint64_t seed = 0);

struct MetricReport
{
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> masked_normal_loss;
    std::optional<double> masked_depth_l1;
    std::optional<double> mask_mse;
    std::optional<double> chamfer;
    std::optional<double> fscore_01;
    std::optional<double> weighted_loss;

    nlohmann::json to_json() const;
};

/// Full report for two buffer sets (image and geometry terms).
MetricReport compare_buffers(const RenderBuffers& pred, const RenderBuffers& gt);

/// Geometry report for two meshes, compared in their given coordinates.
MetricReport compare_meshes(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_points = 16384,
                            double threshold = 0.1, std::uint64_t seed = 0);

} // namespace psr
