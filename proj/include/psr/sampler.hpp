#pragma once

#include "psr/brdf.hpp"
#include "psr/envlight.hpp"
#include "psr/scene.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace psr {

/// Closed interval [lo, hi].
struct Interval
{
    double lo = 0.0;
    double hi = 0.0;

    bool valid() const { return lo <= hi; }
    double at(double u) const { return lo + (hi - lo) * u; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

inline constexpr int kMaterialGridSteps = 11;
inline constexpr int kMaterialGridSize = kMaterialGridSteps * kMaterialGridSteps;

/// (metallic, roughness) of grid cell `index`; both coordinates are multiples of 0.1.
std::array<double, 2> material_grid_cell(int index);
int material_grid_index(double metallic, double roughness);

struct SamplingPolicy
{
    std::vector<std::string> env_pool;
    Interval fov_range{30.0, 60.0};
    Interval radius_range{1.5, 3.5};
    Interval elevation_range{-30.0, 60.0};
    double per_view_change_prob = 0.5;
    int views_per_object = 4;
    int resolution = 256;
    std::uint64_t seed = 0;
    /// Every view reuses view 0's camera; only material and lighting vary.
    bool fixed_camera = false;

    void validate() const;
};

struct ViewCondition
{
    Camera camera;
    Material material;
    int material_index = 0;
    std::string env_id;
    bool changed = true;
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    double radius = 0.0;
};

/// Deterministic view stream for one object. Material and lighting are
/// re-drawn jointly with probability per_view_change_prob per view.
std::vector<ViewCondition> sample_conditions(const SamplingPolicy& policy, std::uint64_t object_seed);

/// Stable per-object seed derived from the policy seed and the object id.
std::uint64_t object_seed_for(const SamplingPolicy& policy, const std::string& object_id);

struct DatasetOptions
{
    PrefilterConfig prefilter;
    int lut_resolution = 64;
    int lut_samples = 4096;
};

struct DatasetSummary
{
    std::vector<std::filesystem::path> manifests;
    std::vector<std::filesystem::path> skipped_meshes;
};

/// Renders every object x view into `output_dir/<object_id>/` and writes
/// one manifest.json per object. Environments are read from `env_paths`
/// (id = file stem) and prefiltered once into `output_dir/envs/<hash>/`.
/// Unloadable meshes are skipped with a warning; unreadable environments throw.
DatasetSummary generate_dataset(const std::vector<std::filesystem::path>& mesh_paths,
                                const std::vector<std::filesystem::path>& env_paths,
                                SamplingPolicy policy, const std::filesystem::path& output_dir,
                                const DatasetOptions& options = {});

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);

} // namespace psr
