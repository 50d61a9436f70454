#pragma once

#include "psr/brdf.hpp"
#include "psr/envlight.hpp"
#include "psr/raster.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace psr {

struct DirectionalLight
{
    Vec3 direction = Vec3::UnitZ(); // surface -> light, unit
    Rgb intensity = Rgb::Ones();
};

/// One known split-sum observation condition: per-pixel view vectors, the
/// material, and the lighting artifacts it was rendered with.
struct SplitSumCondition
{
    ImageF view; // unit vectors, surface -> camera
    Material material;
    std::shared_ptr<const PrefilteredEnvironment> env;
    std::shared_ptr<const DfgLut> lut;
};

/// Per-pixel color stacks over K conditions. Exactly one of `lights`
/// (Lambertian mode) or `splitsum` (split-sum mode) holds K entries.
struct PSObservationSet
{
    int width = 0;
    int height = 0;
    ImageF mask;
    std::vector<ImageF> colors;
    std::vector<DirectionalLight> lights;
    std::vector<SplitSumCondition> splitsum;
    /// Optional per-condition single-channel masks; when present, condition k
    /// contributes at a pixel only where valid[k] > 0.5 (e.g. occluded or
    /// off-screen after reprojection).
    std::vector<ImageF> valid;

    std::size_t condition_count() const { return colors.size(); }
    bool covered(int x, int y) const { return mask.at(x, y) > 0.5f; }
    bool observed(std::size_t k, int x, int y) const { return valid.empty() || valid[k].at(x, y) > 0.5f; }

    /// Throws ConfigError for missing knowns, DimensionError for shape mismatch.
    void validate() const;

    /// Copy with conditions reordered; order[i] is the source index of entry i.
    PSObservationSet permuted(const std::vector<int>& order) const;
    /// Copy restricted to the first k conditions.
    PSObservationSet first(std::size_t k) const;
};

enum class PixelStatus : std::uint8_t { ok = 0, degenerate = 1, no_converge = 2, masked_out = 3 };

/// Normal and albedo are zero wherever status != ok.
struct PSSolution
{
    int width = 0;
    int height = 0;
    ImageF normal;
    ImageF albedo;
    ImageF residual;
    std::vector<PixelStatus> status;

    PSSolution() = default;
    PSSolution(int w, int h);

    PixelStatus status_at(int x, int y) const { return status[std::size_t(y) * width + x]; }
    std::size_t count(PixelStatus s) const;
};

/// Unit view vectors from a world-position buffer toward a camera center.
ImageF view_map(const ImageF& position, const ImageF& mask, const Vec3& camera_position);

/// C = a (L . n) with attached shadows clamped to zero.
std::vector<ImageF> render_lambertian(const ImageF& normal, const ImageF& albedo, const ImageF& mask,
                                      const std::vector<DirectionalLight>& lights);

/// usable[k][pixel] is 1 iff max channel of observation k exceeds tau_k.
/// A non-positive tau disables thresholding.
using UsableMask = std::vector<std::vector<std::uint8_t>>;
UsableMask shadow_threshold(const PSObservationSet& obs, double tau);
/// Per-condition threshold of fraction * (max value of that condition's image).
UsableMask shadow_threshold_relative(const PSObservationSet& obs, double fraction = 0.01);

struct LambertianOptions
{
    /// Absolute threshold; when unset the relative default applies.
    std::optional<double> tau;
    double relative_tau = 0.01;
    double max_condition = 1e6;
};

/// Per-channel least squares for b = a_c n over unshadowed observations.
PSSolution lambertian_solve(const PSObservationSet& obs, const LambertianOptions& opts = {});

enum class InitMode { lambertian, provided, camera_facing };

struct SplitSumOptions
{
    int max_iterations = 50;
    double step_tolerance = 1e-6;
    double angle_step = 1e-4;
    double albedo_step = 1e-4;
    double initial_lambda = 1e-3;
    /// Relative disagreement between the h and h/2 central differences above
    /// which the h/2 column is used instead.
    double fd_consistency = 1e-2;
    InitMode init = InitMode::lambertian;
    /// A converged RMS above this fraction of the observed RMS marks a local
    /// minimum; the pixel is then restarted from the best candidates of a
    /// scan over the visible hemisphere. Zero disables restarts.
    double restart_rms_fraction = 1e-3;
    int restart_candidates = 1024;
    int restart_starts = 8;
    const ImageF* init_normal = nullptr;
    const ImageF* init_albedo = nullptr;
};

/// Residual model of one pixel: C_pred(n, a; k) - C_obs(k) stacked over
/// conditions, with the normal parameterized by a tangent 2-vector about a
/// reference direction.
class SplitSumPixelProblem
{
public:
    SplitSumPixelProblem(const PSObservationSet& obs, int x, int y);

    int residual_count() const { return 3 * int(views_.size()); }

    /// Normal at tangent offset theta about `base` (exponential map).
    static Vec3 exp_normal(const Vec3& base, const Vec2& theta);

    Eigen::VectorXd residual(const Vec3& n, const Rgb& albedo) const;
    Eigen::VectorXd residual(const Vec3& base, const Vec2& theta, const Rgb& albedo) const;
    double cost(const Vec3& n, const Rgb& albedo) const { return residual(n, albedo).squaredNorm(); }

    /// Central-difference Jacobian (3K x 5): columns are theta_1, theta_2, a_r, a_g, a_b.
    Eigen::MatrixXd jacobian(const Vec3& n, const Rgb& albedo, double angle_step, double albedo_step) const;
    Eigen::MatrixXd angle_columns(const Vec3& n, const Rgb& albedo, double step) const;
    Eigen::MatrixXd albedo_columns(const Vec3& n, const Rgb& albedo, double step) const;

    /// Concatenated interpolation-cell signatures of every lookup at normal n.
    std::vector<std::int64_t> cells(const Vec3& n) const;

    /// Closed-form albedo for a fixed normal (the model is affine in albedo).
    Rgb best_albedo(const Vec3& n) const;

    const std::vector<Vec3>& views() const { return views_; }
    const std::vector<Rgb>& observed() const { return observed_; }
    /// Indices into the observation set of the conditions that see this pixel.
    const std::vector<std::size_t>& conditions() const { return conds_; }

private:
    const PSObservationSet* obs_;
    std::vector<std::size_t> conds_;
    std::vector<Vec3> views_;
    std::vector<Rgb> observed_;
};

struct PixelSolveResult
{
    Vec3 normal = Vec3::UnitZ();
    Rgb albedo = Rgb::Zero();
    double rms = 0.0;
    int iterations = 0;
    PixelStatus status = PixelStatus::ok;
    std::vector<double> accepted_costs; // cost after each accepted step, starting with the initial cost
};

/// Damped Gauss-Newton (Levenberg-Marquardt) on one pixel from a given start.
PixelSolveResult solve_pixel(const SplitSumPixelProblem& problem, const Vec3& init_normal,
                             const Rgb& init_albedo, const SplitSumOptions& opts);

/// Irradiance map reduced to ambient + linear terms, E_c(n) ~ ambient_c + linear.row(c) n.
struct IrradianceFit
{
    Rgb ambient = Rgb::Zero();
    Mat3 linear = Mat3::Zero();
};

IrradianceFit fit_irradiance(const ImageF& diffuse_map);

/// Lambertian-proxy initialization for split-sum observations: each
/// condition's irradiance is replaced by its ambient + linear fit and a
/// gray-albedo linear system for (a, a n) is solved over the most diffuse
/// conditions (largest roughness * (1 - metallic)). Returns nullopt when that
/// system is rank deficient or the normal faces away from every view.
std::optional<std::pair<Vec3, Rgb>> lambertian_init(const SplitSumPixelProblem& problem,
                                                    const PSObservationSet& obs,
                                                    const std::vector<IrradianceFit>& fits);

/// Points of a Fibonacci lattice on the unit sphere.
std::vector<Vec3> fibonacci_sphere(int count);

/// LM from the given start, followed by hemisphere-scan restarts when the
/// result looks like a local minimum (see SplitSumOptions).
PixelSolveResult solve_pixel_robust(const SplitSumPixelProblem& problem, const Vec3& init_normal,
                                    const Rgb& init_albedo, const SplitSumOptions& opts);

PSSolution splitsum_solve(const PSObservationSet& obs, const SplitSumOptions& opts = {});

/// Angle in degrees between two unit vectors.
double angular_error_deg(const Vec3& a, const Vec3& b);

struct RecoveryStats
{
    std::size_t evaluated = 0;
    std::size_t ok = 0;
    double mean_angular_deg = 0.0;
    double median_angular_deg = 0.0;
    double p95_angular_deg = 0.0;
    double median_albedo_rel = 0.0;
    /// Fraction of evaluated pixels with angular error <= angle_tol and albedo
    /// relative error <= albedo_tol (non-ok pixels count as failures).
    double fraction_within = 0.0;
    std::vector<double> angular_deg; // per evaluated ok pixel
};

/// Compares a solution with ground truth over pixels where `eval_mask` is set.
RecoveryStats evaluate_recovery(const PSSolution& sol, const ImageF& gt_normal, const ImageF& gt_albedo,
                                const std::vector<std::uint8_t>& eval_mask, double angle_tol = 2.0,
                                double albedo_tol = 0.02);

} // namespace psr
