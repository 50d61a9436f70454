#include "psr/sampler.hpp"

#include "psr/raster.hpp"
#include "psr/rng.hpp"
#include "psr/shade.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <map>
#include <memory>

namespace psr {

namespace {

constexpr std::uint64_t kViewStream = 0x76696577ULL;
constexpr int kManifestSchemaVersion = 1;

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, double fov, int resolution)
{
    const double az = azimuth_deg * kPi / 180.0;
    const double el = elevation_deg * kPi / 180.0;
    Camera cam;
    cam.position = radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    cam.target = Vec3::Zero();
    cam.up = Vec3::UnitY();
    cam.fov_y = fov;
    cam.width = resolution;
    cam.height = resolution;
    return cam;
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from_json(const nlohmann::json& j)
{
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json chain_config_json(const PrefilterConfig& c)
{
    return {{"levels", c.levels},
            {"base_width", c.base_width},
            {"samples_per_texel", c.samples_per_texel},
            {"diffuse_width", c.diffuse_width},
            {"diffuse_samples", c.diffuse_samples},
            {"seed", c.seed}};
}

} // namespace

std::array<double, 2> material_grid_cell(int index)
{
    if (index < 0 || index >= kMaterialGridSize) throw ConfigError("material grid index out of range");
    return {double(index / kMaterialGridSteps) / 10.0, double(index % kMaterialGridSteps) / 10.0};
}

int material_grid_index(double metallic, double roughness)
{
    const long m = std::lround(metallic * 10.0);
    const long r = std::lround(roughness * 10.0);
    if (m < 0 || m > 10 || r < 0 || r > 10 || std::abs(metallic * 10.0 - double(m)) > 1e-9 ||
        std::abs(roughness * 10.0 - double(r)) > 1e-9)
        return -1;
    return int(m * kMaterialGridSteps + r);
}

void SamplingPolicy::validate() const
{
    if (env_pool.empty()) throw ConfigError("environment pool is empty");
    if (!fov_range.valid() || fov_range.lo <= 0.0 || fov_range.hi >= 180.0)
        throw ConfigError("fov range must be a non-empty interval inside (0, 180)");
    if (!radius_range.valid() || radius_range.lo <= 0.0) throw ConfigError("radius range must be positive");
    if (!elevation_range.valid() || elevation_range.lo < -90.0 || elevation_range.hi > 90.0)
        throw ConfigError("elevation range must lie inside [-90, 90]");
    if (!(per_view_change_prob >= 0.0 && per_view_change_prob <= 1.0))
        throw ConfigError("per-view change probability must lie in [0, 1]");
    if (views_per_object < 1) throw ConfigError("views per object must be positive");
    if (resolution < 1) throw ConfigError("resolution must be positive");
}

std::vector<ViewCondition> sample_conditions(const SamplingPolicy& policy, std::uint64_t object_seed)
{
    policy.validate();
    KeyedRng rng{policy.seed, object_seed, kViewStream};
    std::vector<ViewCondition> views;
    for (int i = 0; i < policy.views_per_object; ++i) {
        ViewCondition vc;
        // Fixed draw order per view keeps the stream a pure function of the inputs.
        const double u_change = rng.uniform();
        const auto mat_index = int(rng.below(kMaterialGridSize));
        const auto env_index = std::size_t(rng.below(policy.env_pool.size()));
        const double u_az = rng.uniform();
        const double u_el = rng.uniform();
        const double u_rad = rng.uniform();
        const double u_fov = rng.uniform();

        vc.changed = i == 0 || u_change < policy.per_view_change_prob;
        if (vc.changed) {
            const auto cell = material_grid_cell(mat_index);
            vc.material = Material(cell[0], cell[1]);
            vc.material_index = mat_index;
            vc.env_id = policy.env_pool[env_index];
        } else {
            vc.material = views.back().material;
            vc.material_index = views.back().material_index;
            vc.env_id = views.back().env_id;
        }

        if (policy.fixed_camera && i > 0) {
            vc.camera = views.front().camera;
            vc.azimuth_deg = views.front().azimuth_deg;
            vc.elevation_deg = views.front().elevation_deg;
            vc.radius = views.front().radius;
        } else {
            vc.azimuth_deg = 360.0 * u_az;
            vc.elevation_deg = policy.elevation_range.at(u_el);
            vc.radius = policy.radius_range.at(u_rad);
            vc.camera = orbit_camera(vc.azimuth_deg, vc.elevation_deg, vc.radius, policy.fov_range.at(u_fov),
                                     policy.resolution);
        }
        views.push_back(std::move(vc));
    }
    return views;
}

std::uint64_t object_seed_for(const SamplingPolicy& policy, const std::string& object_id)
{
    return mix64(policy.seed ^ fnv1a(object_id));
}

nlohmann::json camera_to_json(const Camera& camera)
{
    return {{"position", vec_json(camera.position)},
            {"target", vec_json(camera.target)},
            {"up", vec_json(camera.up)},
            {"fov_y", camera.fov_y},
            {"near", camera.near},
            {"far", camera.far},
            {"resolution", {camera.width, camera.height}}};
}

Camera camera_from_json(const nlohmann::json& j)
{
    Camera cam;
    cam.position = vec_from_json(j.at("position"));
    cam.target = vec_from_json(j.at("target"));
    cam.up = vec_from_json(j.at("up"));
    cam.fov_y = j.at("fov_y").get<double>();
    cam.near = j.value("near", cam.near);
    cam.far = j.value("far", cam.far);
    cam.width = j.at("resolution").at(0).get<int>();
    cam.height = j.at("resolution").at(1).get<int>();
    cam.validate();
    return cam;
}

DatasetSummary generate_dataset(const std::vector<std::filesystem::path>& mesh_paths,
                                const std::vector<std::filesystem::path>& env_paths, SamplingPolicy policy,
                                const std::filesystem::path& output_dir, const DatasetOptions& options)
{
    namespace fs = std::filesystem;
    options.prefilter.validate();

    std::map<std::string, fs::path> env_by_id;
    for (const auto& p : env_paths) {
        const auto id = p.stem().string();
        if (!env_by_id.emplace(id, p).second) throw ConfigError("duplicate environment id: " + id);
    }
    if (policy.env_pool.empty())
        for (const auto& [id, path] : env_by_id) policy.env_pool.push_back(id);
    for (const auto& id : policy.env_pool)
        if (!env_by_id.count(id)) throw ConfigError("environment id not found: " + id);
    policy.validate();

    fs::create_directories(output_dir);
    const DfgLut lut = compute_dfg_lut(options.lut_resolution, options.lut_samples, options.prefilter.seed);
    save_dfg_lut(output_dir / "dfg_lut.pfm", lut);

    struct CachedEnv
    {
        std::shared_ptr<const PrefilteredEnvironment> pre;
        std::string hash;
    };
    std::map<std::string, CachedEnv> cache;
    auto environment = [&](const std::string& id) -> const CachedEnv& {
        auto it = cache.find(id);
        if (it != cache.end()) return it->second;
        const EnvironmentMap env = load_envmap(env_by_id.at(id));
        auto pre = std::make_shared<PrefilteredEnvironment>(prefilter(env, options.prefilter));
        const std::string hash = pre->meta.source_hash;
        const fs::path chain_dir = output_dir / "envs" / hash;
        if (!fs::exists(chain_dir / "chain.json")) save_prefiltered(chain_dir, *pre);
        return cache.emplace(id, CachedEnv{std::move(pre), hash}).first->second;
    };

    DatasetSummary summary;
    for (const auto& mesh_path : mesh_paths) {
        TriangleMesh mesh;
        try {
            mesh = normalize_to_unit_cube(load_mesh(mesh_path));
        } catch (const DataError& e) {
            spdlog::warn("skipping mesh {}: {}", mesh_path.string(), e.what());
            summary.skipped_meshes.push_back(mesh_path);
            continue;
        } catch (const ConfigError& e) {
            spdlog::warn("skipping mesh {}: {}", mesh_path.string(), e.what());
            summary.skipped_meshes.push_back(mesh_path);
            continue;
        }

        const std::string object_id = mesh_path.stem().string();
        const std::uint64_t object_seed = object_seed_for(policy, object_id);
        const auto views = sample_conditions(policy, object_seed);
        const fs::path object_dir = output_dir / object_id;
        fs::create_directories(object_dir);

        nlohmann::json jviews = nlohmann::json::array();
        for (std::size_t i = 0; i < views.size(); ++i) {
            const auto& vc = views[i];
            char id_buf[32];
            std::snprintf(id_buf, sizeof id_buf, "view_%03zu", i);
            const std::string view_id = id_buf;
            const CachedEnv& env = environment(vc.env_id);
            const GBuffer gb = rasterize(mesh, vc.camera);
            const RenderBuffers rb = shade_splitsum(gb, vc.material, *env.pre, lut, vc.camera);
            const BufferFiles files = write_render_buffers(object_dir, view_id, rb);

            jviews.push_back({
                {"view_id", view_id},
                {"camera", camera_to_json(vc.camera)},
                {"orbit", {{"azimuth_deg", vc.azimuth_deg}, {"elevation_deg", vc.elevation_deg}, {"radius", vc.radius}}},
                {"material", {{"metallic", vc.material.metallic()}, {"roughness", vc.material.roughness()}}},
                {"env",
                 {{"id", vc.env_id},
                  {"hash", env.hash},
                  {"chain_dir", "../envs/" + env.hash},
                  {"chain_config", chain_config_json(options.prefilter)}}},
                {"changed", vc.changed},
                {"files",
                 {{"color", files.color},
                  {"normal", files.normal},
                  {"depth", files.depth},
                  {"mask", files.mask},
                  {"albedo", files.albedo},
                  {"l_spec", files.l_spec},
                  {"l_diff", files.l_diff},
                  {"position", files.position},
                  {"preview", files.preview}}},
            });
        }

        const nlohmann::json manifest = {
            {"schema_version", kManifestSchemaVersion},
            {"redraw_rule", "joint"},
            {"object_id", object_id},
            {"mesh_path", mesh_path.string()},
            {"seed", object_seed},
            {"policy_seed", policy.seed},
            {"per_view_change_prob", policy.per_view_change_prob},
            {"lut", {{"path", "../dfg_lut.pfm"}, {"resolution", options.lut_resolution}, {"samples", options.lut_samples}}},
            {"views", jviews},
        };
        const fs::path manifest_path = object_dir / "manifest.json";
        std::ofstream(manifest_path) << manifest.dump(2) << '\n';
        summary.manifests.push_back(manifest_path);
        spdlog::info("wrote {} views for {}", views.size(), object_id);
    }
    return summary;
}

} // namespace psr
