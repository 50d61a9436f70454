#include "psr/cli.hpp"

#include "psr/envlight.hpp"
#include "psr/mcref.hpp"
#include "psr/metrics.hpp"
#include "psr/photostereo.hpp"
#include "psr/raster.hpp"
#include "psr/sampler.hpp"
#include "psr/scene.hpp"
#include "psr/shade.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace psr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct GlobalOptions
{
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string log_level = "info";
};

struct PrefilterFlags
{
    int levels = 6;
    int samples = 512;
    int base_width = 256;
    int diffuse_width = 64;
    int diffuse_samples = 1024;
    int lut_resolution = 64;
    int lut_samples = 4096;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--levels", levels, "Specular mip levels (>= 2)")->capture_default_str();
        cmd->add_option("--samples", samples, "Samples per specular texel (>= 64)")->capture_default_str();
        cmd->add_option("--base-width", base_width, "Width of specular level 0")->capture_default_str();
        cmd->add_option("--diffuse-width", diffuse_width, "Irradiance map width")->capture_default_str();
        cmd->add_option("--diffuse-samples", diffuse_samples, "Samples per irradiance texel")->capture_default_str();
        cmd->add_option("--lut-res", lut_resolution, "DFG LUT resolution")->capture_default_str();
        cmd->add_option("--lut-samples", lut_samples, "Samples per DFG LUT entry")->capture_default_str();
    }

    PrefilterConfig config(std::uint64_t seed) const
    {
        PrefilterConfig c;
        c.levels = levels;
        c.samples_per_texel = samples;
        c.base_width = base_width;
        c.diffuse_width = diffuse_width;
        c.diffuse_samples = diffuse_samples;
        c.seed = seed;
        return c;
    }

    void validate_lut() const
    {
        if (lut_resolution < 2) throw ConfigError("dfg resolution must be >= 2");
        if (lut_samples < 1024) throw ConfigError("dfg lut requires >= 1024 samples per entry");
    }

    json to_json() const
    {
        return {{"levels", levels},
                {"samples", samples},
                {"base_width", base_width},
                {"diffuse_width", diffuse_width},
                {"diffuse_samples", diffuse_samples},
                {"lut_res", lut_resolution},
                {"lut_samples", lut_samples}};
    }
};

struct SceneFlags
{
    std::string mesh;
    bool sphere = false;
    int sphere_subdivisions = 5;
    bool no_normalize = false;
    std::vector<double> albedo{0.5, 0.5, 0.5};
    std::string texture;
    std::vector<double> material{0.5, 0.5};
    std::vector<double> eye{0.0, 0.0, 3.0};
    std::vector<double> target{0.0, 0.0, 0.0};
    std::vector<double> up{0.0, 1.0, 0.0};
    double fov = 45.0;
    int resolution = 256;

    void add_to(CLI::App* cmd, int default_resolution)
    {
        resolution = default_resolution;
        auto* mesh_opt = cmd->add_option("--mesh", mesh, "OBJ mesh");
        auto* sphere_opt = cmd->add_flag("--sphere", sphere, "Use a built-in unit icosphere");
        mesh_opt->excludes(sphere_opt);
        cmd->add_option("--subdiv", sphere_subdivisions, "Icosphere subdivisions")->capture_default_str();
        cmd->add_flag("--no-normalize", no_normalize, "Keep OBJ coordinates (default: fit into [-1,1]^3)");
        cmd->add_option("--albedo", albedo, "Uniform albedo r,g,b")->delimiter(',')->expected(3)->capture_default_str();
        cmd->add_option("--texture", texture, "Albedo texture (PNG or PFM)");
        cmd->add_option("--material", material, "Metallic and roughness m,rho")
            ->delimiter(',')
            ->expected(2)
            ->capture_default_str();
        cmd->add_option("--eye", eye, "Camera position x,y,z")->delimiter(',')->expected(3)->capture_default_str();
        cmd->add_option("--target", target, "Camera target x,y,z")->delimiter(',')->expected(3)->capture_default_str();
        cmd->add_option("--up", up, "Camera up x,y,z")->delimiter(',')->expected(3)->capture_default_str();
        cmd->add_option("--fov", fov, "Vertical field of view in degrees")->capture_default_str();
        cmd->add_option("--res", resolution, "Image width and height")->capture_default_str();
    }

    Material parsed_material() const
    {
        for (double v : material)
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("--material values must lie in [0, 1]");
        return {material[0], material[1]};
    }

    Camera camera() const
    {
        Camera c;
        c.position = Vec3(eye[0], eye[1], eye[2]);
        c.target = Vec3(target[0], target[1], target[2]);
        c.up = Vec3(up[0], up[1], up[2]);
        c.fov_y = fov;
        c.width = resolution;
        c.height = resolution;
        c.validate();
        return c;
    }

    TriangleMesh load() const
    {
        if (sphere) {
            TriangleMesh m = make_icosphere(sphere_subdivisions, 1.0);
            m.albedo = UniformAlbedo{Rgb(albedo[0], albedo[1], albedo[2])};
            return m;
        }
        if (mesh.empty()) throw ConfigError("one of --mesh or --sphere is required");
        MeshLoadOptions opts;
        opts.default_albedo = Rgb(albedo[0], albedo[1], albedo[2]);
        if (!texture.empty()) opts.texture = texture;
        if (!fs::exists(mesh)) throw ConfigError("mesh not found: " + mesh);
        TriangleMesh m = load_mesh(mesh, opts);
        return no_normalize ? m : normalize_to_unit_cube(m);
    }

    json to_json() const
    {
        return {{"mesh", mesh},
                {"sphere", sphere},
                {"subdiv", sphere_subdivisions},
                {"normalize", !no_normalize},
                {"albedo", albedo},
                {"texture", texture},
                {"material", material},
                {"eye", eye},
                {"target", target},
                {"up", up},
                {"fov", fov},
                {"res", resolution}};
    }
};

void write_json(const fs::path& path, const json& j)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_run_json(const fs::path& out_dir, const std::string& command, const GlobalOptions& g, const json& config)
{
    write_json(out_dir / "run.json", {{"command", command},
                                      {"version", kVersion},
                                      {"global", {{"seed", g.seed}, {"threads", g.threads}, {"log_level", g.log_level}}},
                                      {"config", config}});
}

DfgLut lut_for_chain(const std::string& lut_flag, const fs::path& chain_dir)
{
    return load_dfg_lut(lut_flag.empty() ? chain_dir / "dfg_lut.pfm" : fs::path(lut_flag));
}

// ---------------------------------------------------------------------------
// prefilter

struct PrefilterCmd
{
    std::string env;
    std::string out;
    PrefilterFlags flags;
};

void cmd_prefilter(const PrefilterCmd& c, const GlobalOptions& g)
{
    const PrefilterConfig config = c.flags.config(g.seed);
    config.validate();
    c.flags.validate_lut();
    const EnvironmentMap env = load_envmap(c.env);
    const PrefilteredEnvironment pre = prefilter(env, config);
    const DfgLut lut = compute_dfg_lut(c.flags.lut_resolution, c.flags.lut_samples, g.seed);
    save_prefiltered(c.out, pre);
    save_dfg_lut(fs::path(c.out) / "dfg_lut.pfm", lut);
    json cfg = c.flags.to_json();
    cfg["env"] = c.env;
    cfg["out"] = c.out;
    write_run_json(c.out, "prefilter", g, cfg);
    spdlog::info("prefiltered {} into {} ({} levels, source hash {})", c.env, c.out, pre.levels(),
                 pre.meta.source_hash);
}

// ---------------------------------------------------------------------------
// render

struct RenderCmd
{
    SceneFlags scene;
    std::string chain;
    std::string relight;
    std::string lut;
    std::string out;
    std::string view_id = "view";
};

void cmd_render(const RenderCmd& c, const GlobalOptions& g)
{
    const Material material = c.scene.parsed_material();
    const Camera camera = c.scene.camera();
    const fs::path chain_dir = c.relight.empty() ? fs::path(c.chain) : fs::path(c.relight);
    const PrefilteredEnvironment pre = load_prefiltered(chain_dir);
    const DfgLut lut = lut_for_chain(c.lut, c.chain);
    const TriangleMesh mesh = c.scene.load();

    const GBuffer gb = rasterize(mesh, camera);
    const RenderBuffers rb = relight(gb, material, pre, lut, camera);
    write_render_buffers(c.out, c.view_id, rb);

    // Diffuse and specular color components alongside the buffer set.
    ImageF c_diff(rb.width, rb.height, 3), c_spec(rb.width, rb.height, 3);
    const ImageF a_s = recompute_specular_albedo(rb, material, lut, camera);
    for (int y = 0; y < rb.height; ++y) {
        for (int x = 0; x < rb.width; ++x) {
            if (!rb.covered(x, y)) continue;
            c_diff.set_rgb(x, y, diffuse_albedo(rb.albedo.rgb(x, y), material) * rb.l_diff.rgb(x, y));
            c_spec.set_rgb(x, y, a_s.rgb(x, y) * rb.l_spec.rgb(x, y));
        }
    }
    write_pfm(fs::path(c.out) / (c.view_id + "_c_diff.pfm"), c_diff);
    write_pfm(fs::path(c.out) / (c.view_id + "_c_spec.pfm"), c_spec);

    json cfg = c.scene.to_json();
    cfg["chain"] = c.chain;
    cfg["relight"] = c.relight;
    cfg["lut"] = c.lut;
    cfg["out"] = c.out;
    cfg["view_id"] = c.view_id;
    write_run_json(c.out, "render", g, cfg);
    spdlog::info("rendered {} covered pixels into {}", gb.covered_count(), c.out);
}

// ---------------------------------------------------------------------------
// gen-dataset

struct GenDatasetCmd
{
    std::string meshes;
    std::string envs;
    std::string out;
    int views = 4;
    double prob = 0.5;
    int resolution = 256;
    bool fixed_camera = false;
    std::vector<double> fov{30.0, 60.0};
    std::vector<double> radius{1.5, 3.5};
    std::vector<double> elevation{-30.0, 60.0};
    PrefilterFlags flags;
};

std::vector<fs::path> list_files(const fs::path& dir, const std::set<std::string>& extensions, const char* what)
{
    if (!fs::is_directory(dir)) throw ConfigError(std::string(what) + " directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
        if (extensions.count(ext)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void cmd_gen_dataset(const GenDatasetCmd& c, const GlobalOptions& g)
{
    SamplingPolicy policy;
    policy.views_per_object = c.views;
    policy.per_view_change_prob = c.prob;
    policy.resolution = c.resolution;
    policy.fixed_camera = c.fixed_camera;
    policy.fov_range = {c.fov[0], c.fov[1]};
    policy.radius_range = {c.radius[0], c.radius[1]};
    policy.elevation_range = {c.elevation[0], c.elevation[1]};
    policy.seed = g.seed;

    DatasetOptions opts;
    opts.prefilter = c.flags.config(g.seed);
    opts.lut_resolution = c.flags.lut_resolution;
    opts.lut_samples = c.flags.lut_samples;
    opts.prefilter.validate();
    c.flags.validate_lut();

    const auto meshes = list_files(c.meshes, {".obj"}, "mesh");
    const auto envs = list_files(c.envs, {".hdr", ".pic", ".pfm"}, "environment");
    if (envs.empty()) throw ConfigError("no environment maps found in " + c.envs);
    const DatasetSummary summary = generate_dataset(meshes, envs, policy, c.out, opts);

    json cfg = c.flags.to_json();
    cfg.update({{"meshes", c.meshes},
                {"envs", c.envs},
                {"out", c.out},
                {"views", c.views},
                {"prob", c.prob},
                {"res", c.resolution},
                {"fixed_camera", c.fixed_camera},
                {"fov", c.fov},
                {"radius", c.radius},
                {"elevation", c.elevation}});
    write_run_json(c.out, "gen-dataset", g, cfg);
    spdlog::info("wrote {} manifests, skipped {} meshes", summary.manifests.size(), summary.skipped_meshes.size());
}

// ---------------------------------------------------------------------------
// recover

struct RecoverCmd
{
    std::string manifest;
    std::string out;
    int reference = 0;
    int max_views = 0;
    int max_iterations = 50;
    std::string init = "lambertian";
    double visibility_tolerance = 0.02;
};

bool same_camera(const Camera& a, const Camera& b)
{
    return a.position == b.position && a.target == b.target && a.up == b.up && a.fov_y == b.fov_y &&
           a.width == b.width && a.height == b.height;
}

std::array<std::uint8_t, 3> status_color(PixelStatus s)
{
    switch (s) {
    case PixelStatus::ok: return {0, 200, 0};
    case PixelStatus::degenerate: return {255, 200, 0};
    case PixelStatus::no_converge: return {220, 0, 0};
    case PixelStatus::masked_out: break;
    }
    return {0, 0, 0};
}

void cmd_recover(const RecoverCmd& c, const GlobalOptions& g)
{
    const fs::path manifest_path = c.manifest;
    if (!fs::exists(manifest_path)) throw ConfigError("manifest not found: " + c.manifest);
    json manifest;
    try {
        std::ifstream in(manifest_path);
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    const fs::path base = manifest_path.parent_path();

    struct ViewData
    {
        Camera camera;
        Material material;
        RenderBuffers buffers;
        fs::path chain_dir;
    };
    std::vector<ViewData> views;
    std::shared_ptr<const DfgLut> lut;
    try {
        lut = std::make_shared<DfgLut>(load_dfg_lut(base / manifest.at("lut").at("path").get<std::string>()));
        for (const auto& jv : manifest.at("views")) {
            ViewData v;
            v.camera = camera_from_json(jv.at("camera"));
            v.material = Material(jv.at("material").at("metallic").get<double>(),
                                  jv.at("material").at("roughness").get<double>());
            v.buffers = read_render_buffers(base, jv.at("view_id").get<std::string>());
            v.chain_dir = base / jv.at("env").at("chain_dir").get<std::string>();
            views.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    if (views.empty()) throw ConfigError("manifest lists no views");
    if (c.max_views > 0 && std::size_t(c.max_views) < views.size()) views.resize(std::size_t(c.max_views));
    if (c.reference < 0 || std::size_t(c.reference) >= views.size()) throw ConfigError("--reference out of range");
    if (views.size() < 2) throw ConfigError("split-sum recovery needs at least 2 views");

    std::map<fs::path, std::shared_ptr<const PrefilteredEnvironment>> chains;
    for (const auto& v : views)
        if (!chains.count(v.chain_dir))
            chains[v.chain_dir] = std::make_shared<PrefilteredEnvironment>(load_prefiltered(v.chain_dir));

    const ViewData& ref = views[std::size_t(c.reference)];
    const int W = ref.buffers.width;
    const int H = ref.buffers.height;
    PSObservationSet obs;
    obs.width = W;
    obs.height = H;
    obs.mask = ref.buffers.mask;
    std::size_t reprojected_views = 0;

    for (const auto& v : views) {
        ImageF colors(W, H, 3);
        ImageF view_dirs(W, H, 3);
        ImageF valid(W, H, 1);
        const bool aligned = same_camera(v.camera, ref.camera);
        reprojected_views += !aligned;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (obs.mask.at(x, y) <= 0.5f) continue;
                const Vec3 p = ref.buffers.position.rgb(x, y).matrix();
                view_dirs.set_rgb(x, y, (v.camera.position - p).normalized().array());
                if (aligned) {
                    colors.set_rgb(x, y, v.buffers.color.rgb(x, y));
                    valid.at(x, y) = 1.0f;
                    continue;
                }
                // Nearest-pixel reprojection with a world-position visibility test.
                const auto px = project_to_pixel(v.camera, p);
                if (!px) continue;
                const long qx = std::lround(px->x());
                const long qy = std::lround(px->y());
                if (qx < 0 || qy < 0 || qx >= v.buffers.width || qy >= v.buffers.height ||
                    !v.buffers.covered(int(qx), int(qy)))
                    continue;
                const Vec3 q = v.buffers.position.rgb(int(qx), int(qy)).matrix();
                if ((q - p).norm() > c.visibility_tolerance) continue;
                colors.set_rgb(x, y, v.buffers.color.rgb(int(qx), int(qy)));
                valid.at(x, y) = 1.0f;
            }
        }
        obs.colors.push_back(std::move(colors));
        obs.valid.push_back(std::move(valid));
        obs.splitsum.push_back({std::move(view_dirs), v.material, chains.at(v.chain_dir), lut});
    }

    SplitSumOptions opts;
    opts.max_iterations = c.max_iterations;
    if (c.init == "lambertian") opts.init = InitMode::lambertian;
    else if (c.init == "camera") opts.init = InitMode::camera_facing;
    else throw ConfigError("--init must be lambertian or camera");
    const PSSolution sol = splitsum_solve(obs, opts);

    fs::create_directories(c.out);
    write_pfm(fs::path(c.out) / "normal.pfm", sol.normal);
    write_pfm(fs::path(c.out) / "albedo.pfm", sol.albedo);
    write_pfm(fs::path(c.out) / "residual.pfm", sol.residual);
    std::vector<std::uint8_t> status_px;
    for (PixelStatus s : sol.status) {
        const auto col = status_color(s);
        status_px.insert(status_px.end(), col.begin(), col.end());
    }
    write_file_bytes(fs::path(c.out) / "status.png", encode_png8(status_px, W, H, 3));

    // A pixel is solvable when at least two conditions observe it.
    std::size_t solvable = 0;
    std::vector<std::uint8_t> eval(std::size_t(W) * H, 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!obs.covered(x, y)) continue;
            std::size_t seen = 0;
            for (std::size_t k = 0; k < obs.condition_count(); ++k) seen += obs.observed(k, x, y);
            if (seen >= 2) {
                eval[std::size_t(y) * W + x] = 1;
                ++solvable;
            }
        }
    }
    json summary = {{"views", views.size()},
                    {"reference", c.reference},
                    {"reprojected_views", reprojected_views},
                    {"reference_masked_pixels", std::count_if(ref.buffers.mask.data().begin(),
                                                              ref.buffers.mask.data().end(),
                                                              [](float m) { return m > 0.5f; })},
                    {"solved_pixels", solvable},
                    {"status",
                     {{"ok", sol.count(PixelStatus::ok)},
                      {"degenerate", sol.count(PixelStatus::degenerate)},
                      {"no_converge", sol.count(PixelStatus::no_converge)},
                      {"masked_out", sol.count(PixelStatus::masked_out)}}},
                    {"status_palette", {{"ok", "green"}, {"degenerate", "yellow"}, {"no_converge", "red"}, {"masked_out", "black"}}}};
    if (!ref.buffers.normal.empty() && !ref.buffers.albedo.empty()) {
        const RecoveryStats st = evaluate_recovery(sol, ref.buffers.normal, ref.buffers.albedo, eval);
        summary["ground_truth"] = {{"evaluated", st.evaluated},
                                   {"mean_angular_deg", st.mean_angular_deg},
                                   {"median_angular_deg", st.median_angular_deg},
                                   {"p95_angular_deg", st.p95_angular_deg},
                                   {"median_albedo_rel", st.median_albedo_rel},
                                   {"fraction_within_2deg_2pct", st.fraction_within}};
    }
    write_json(fs::path(c.out) / "summary.json", summary);
    write_run_json(c.out, "recover",
                   g, {{"manifest", c.manifest}, {"out", c.out}, {"reference", c.reference}, {"max_views", c.max_views},
                       {"max_iterations", c.max_iterations}, {"init", c.init}, {"visibility_tolerance", c.visibility_tolerance}});
    spdlog::info("{} solvable pixels of {}, {} ok", solvable, W * H, sol.count(PixelStatus::ok));
}

// ---------------------------------------------------------------------------
// validate

struct ValidateCmd
{
    SceneFlags scene;
    std::string env;
    std::string chain;
    std::string lut;
    std::string out;
    int spp = 2048;
    double min_cos = 0.1;
    PrefilterFlags flags;
};

void cmd_validate(const ValidateCmd& c, const GlobalOptions& g)
{
    const Material material = c.scene.parsed_material();
    const Camera camera = c.scene.camera();
    if (c.spp < 1) throw ConfigError("--spp must be positive");
    const EnvironmentMap env = load_envmap(c.env);
    PrefilteredEnvironment pre;
    DfgLut lut;
    if (!c.chain.empty()) {
        pre = load_prefiltered(c.chain);
        lut = lut_for_chain(c.lut, c.chain);
    } else {
        const PrefilterConfig config = c.flags.config(g.seed);
        config.validate();
        pre = prefilter(env, config);
        lut = c.lut.empty() ? compute_dfg_lut(c.flags.lut_resolution, c.flags.lut_samples, g.seed)
                            : load_dfg_lut(c.lut);
    }
    const TriangleMesh mesh = c.scene.load();
    const GBuffer gb = rasterize(mesh, camera);
    const RenderBuffers rb = shade_splitsum(gb, material, pre, lut, camera);
    McConfig mc;
    mc.samples = c.spp;
    mc.seed = g.seed;
    const McImage oracle = integrate_image(gb, material, env, camera, mc);
    const OracleComparison cmp = compare_with_oracle(rb.color, oracle.color, gb, camera, c.min_cos);

    json cfg = c.scene.to_json();
    cfg.update({{"env", c.env}, {"chain", c.chain}, {"lut", c.lut}, {"spp", c.spp}, {"min_cos", c.min_cos}, {"out", c.out}});
    cfg["prefilter"] = c.flags.to_json();
    fs::create_directories(c.out);
    write_json(fs::path(c.out) / "validate.json", {{"mean_rel_l1", cmp.mean_rel_l1},
                                                   {"p95_rel_l1", cmp.p95_rel_l1},
                                                   {"masked_pixel_count", cmp.masked_pixel_count},
                                                   {"config", cfg}});
    write_pfm(fs::path(c.out) / "splitsum_color.pfm", rb.color);
    write_pfm(fs::path(c.out) / "oracle_color.pfm", oracle.color);
    write_run_json(c.out, "validate", g, cfg);
    spdlog::info("split-sum vs oracle: mean rel L1 {:.4f}, p95 {:.4f} over {} pixels", cmp.mean_rel_l1,
                 cmp.p95_rel_l1, cmp.masked_pixel_count);
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsCmd
{
    std::string pred_dir;
    std::string gt_dir;
    std::string pred_view = "view";
    std::string gt_view = "view";
    std::string pred_mesh;
    std::string gt_mesh;
    bool normalize = false;
    std::size_t points = 16384;
    double threshold = 0.1;
    std::string out;
};

void cmd_metrics(const MetricsCmd& c, const GlobalOptions& g)
{
    const bool buffers = !c.pred_dir.empty() || !c.gt_dir.empty();
    const bool meshes = !c.pred_mesh.empty() || !c.gt_mesh.empty();
    if (buffers == meshes) throw ConfigError("give either --pred-dir/--gt-dir or --pred-mesh/--gt-mesh");
    MetricReport report;
    if (buffers) {
        if (c.pred_dir.empty() || c.gt_dir.empty()) throw ConfigError("--pred-dir and --gt-dir are both required");
        report = compare_buffers(read_render_buffers(c.pred_dir, c.pred_view), read_render_buffers(c.gt_dir, c.gt_view));
    } else {
        if (c.pred_mesh.empty() || c.gt_mesh.empty()) throw ConfigError("--pred-mesh and --gt-mesh are both required");
        for (const auto& p : {c.pred_mesh, c.gt_mesh})
            if (!fs::exists(p)) throw ConfigError("mesh not found: " + p);
        TriangleMesh a = load_mesh(c.pred_mesh);
        TriangleMesh b = load_mesh(c.gt_mesh);
        if (c.normalize) {
            a = normalize_to_unit_cube(a);
            b = normalize_to_unit_cube(b);
        }
        report = compare_meshes(a, b, c.points, c.threshold, g.seed);
    }
    const json j = report.to_json();
    write_json(fs::path(c.out) / "metrics.json", j);
    write_run_json(c.out, "metrics", g,
                   {{"pred_dir", c.pred_dir}, {"gt_dir", c.gt_dir}, {"pred_view", c.pred_view}, {"gt_view", c.gt_view},
                    {"pred_mesh", c.pred_mesh}, {"gt_mesh", c.gt_mesh}, {"normalize", c.normalize},
                    {"points", c.points}, {"threshold", c.threshold}, {"out", c.out}});
    std::cout << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// make-env

struct MakeEnvCmd
{
    std::string out;
    int width = 512;
};

void cmd_make_env(const MakeEnvCmd& c, const GlobalOptions& g)
{
    const EnvironmentMap env = make_procedural_environment(c.width, g.seed);
    const fs::path out = c.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_pfm(out, env.pixels());
    spdlog::info("wrote {}x{} procedural environment to {}", env.width(), env.height(), c.out);
}

void configure_logging(const std::string& level)
{
    auto logger = spdlog::get("psr");
    if (!logger) {
        logger = spdlog::stderr_color_mt("psr");
        spdlog::set_default_logger(logger);
    }
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw ConfigError("unknown --log-level: " + level);
    spdlog::set_level(lvl);
}

} // namespace

int run_cli(const std::vector<std::string>& args)
{
    CLI::App app{"Split-sum rendering and photometric-stereo toolkit", "psr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    GlobalOptions g;
    app.add_option("--seed", g.seed, "Seed for every stochastic stage")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, err, critical or off")->capture_default_str();

    PrefilterCmd pf;
    auto* c_pf = app.add_subcommand("prefilter", "Build the specular mip chain, irradiance map and DFG LUT");
    c_pf->add_option("--env", pf.env, "Environment map (.hdr, .pic or .pfm)")->required();
    c_pf->add_option("--out", pf.out, "Output directory")->required();
    pf.flags.add_to(c_pf);

    RenderCmd rd;
    auto* c_rd = app.add_subcommand("render", "Rasterize and shade one view, writing all buffers");
    rd.scene.add_to(c_rd, 256);
    c_rd->add_option("--chain", rd.chain, "Prefiltered chain directory")->required();
    c_rd->add_option("--relight", rd.relight, "Shade with this chain instead (relighting)");
    c_rd->add_option("--lut", rd.lut, "DFG LUT (default: <chain>/dfg_lut.pfm)");
    c_rd->add_option("--out", rd.out, "Output directory")->required();
    c_rd->add_option("--view-id", rd.view_id, "File name prefix")->capture_default_str();

    GenDatasetCmd gd;
    auto* c_gd = app.add_subcommand("gen-dataset", "Render a multi-condition dataset from meshes and environments");
    c_gd->add_option("--meshes", gd.meshes, "Directory of OBJ meshes")->required();
    c_gd->add_option("--envs", gd.envs, "Directory of environment maps")->required();
    c_gd->add_option("--out", gd.out, "Output directory")->required();
    c_gd->add_option("--views", gd.views, "Views per object")->capture_default_str();
    c_gd->add_option("--prob", gd.prob, "Per-view material/lighting change probability")->capture_default_str();
    c_gd->add_option("--res", gd.resolution, "Image width and height")->capture_default_str();
    c_gd->add_flag("--fixed-camera", gd.fixed_camera, "Reuse the first view's camera for every view");
    c_gd->add_option("--fov", gd.fov, "FOV range lo,hi (degrees)")->delimiter(',')->expected(2)->capture_default_str();
    c_gd->add_option("--radius", gd.radius, "Radius range lo,hi")->delimiter(',')->expected(2)->capture_default_str();
    c_gd->add_option("--elevation", gd.elevation, "Elevation range lo,hi (degrees)")
        ->delimiter(',')
        ->expected(2)
        ->capture_default_str();
    gd.flags.add_to(c_gd);

    RecoverCmd rc;
    auto* c_rc = app.add_subcommand("recover", "Recover normals and albedo from a dataset manifest");
    c_rc->add_option("--manifest", rc.manifest, "manifest.json of one object")->required();
    c_rc->add_option("--out", rc.out, "Output directory")->required();
    c_rc->add_option("--reference", rc.reference, "Reference view index")->capture_default_str();
    c_rc->add_option("--max-views", rc.max_views, "Use only the first N views (0 = all)")->capture_default_str();
    c_rc->add_option("--max-iters", rc.max_iterations, "Solver iterations per pixel")->capture_default_str();
    c_rc->add_option("--init", rc.init, "lambertian or camera")->capture_default_str();
    c_rc->add_option("--visibility-tol", rc.visibility_tolerance, "World-space tolerance for reprojection")
        ->capture_default_str();

    ValidateCmd vd;
    auto* c_vd = app.add_subcommand("validate", "Compare split-sum shading against the Monte Carlo oracle");
    vd.scene.add_to(c_vd, 64);
    c_vd->add_option("--env", vd.env, "Environment map used by the oracle")->required();
    c_vd->add_option("--chain", vd.chain, "Prefiltered chain (default: prefilter --env now)");
    c_vd->add_option("--lut", vd.lut, "DFG LUT");
    c_vd->add_option("--out", vd.out, "Output directory")->required();
    c_vd->add_option("--spp", vd.spp, "Oracle samples per pixel and lobe")->capture_default_str();
    c_vd->add_option("--min-cos", vd.min_cos, "Exclude pixels with n.v below this")->capture_default_str();
    vd.flags.add_to(c_vd);

    MetricsCmd mt;
    auto* c_mt = app.add_subcommand("metrics", "Image and geometry metrics between two buffer sets or meshes");
    c_mt->add_option("--pred-dir", mt.pred_dir, "Predicted buffer directory");
    c_mt->add_option("--gt-dir", mt.gt_dir, "Ground-truth buffer directory");
    c_mt->add_option("--pred-view", mt.pred_view, "Predicted view id")->capture_default_str();
    c_mt->add_option("--gt-view", mt.gt_view, "Ground-truth view id")->capture_default_str();
    c_mt->add_option("--pred-mesh", mt.pred_mesh, "Predicted OBJ");
    c_mt->add_option("--gt-mesh", mt.gt_mesh, "Ground-truth OBJ");
    c_mt->add_flag("--normalize", mt.normalize, "Fit both meshes into [-1,1]^3 first");
    c_mt->add_option("--points", mt.points, "Surface samples per mesh")->capture_default_str();
    c_mt->add_option("--threshold", mt.threshold, "F-score distance threshold")->capture_default_str();
    c_mt->add_option("--out", mt.out, "Output directory")->required();

    MakeEnvCmd me;
    auto* c_me = app.add_subcommand("make-env", "Write a synthetic equirectangular environment (PFM)");
    c_me->add_option("--out", me.out, "Output .pfm path")->required();
    c_me->add_option("--width", me.width, "Map width (height is width/2)")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        configure_logging(g.log_level);
        set_num_threads(g.threads);
        if (c_pf->parsed()) cmd_prefilter(pf, g);
        else if (c_rd->parsed()) cmd_render(rd, g);
        else if (c_gd->parsed()) cmd_gen_dataset(gd, g);
        else if (c_rc->parsed()) cmd_recover(rc, g);
        else if (c_vd->parsed()) cmd_validate(vd, g);
        else if (c_mt->parsed()) cmd_metrics(mt, g);
        else if (c_me->parsed()) cmd_make_env(me, g);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
    return exit_ok;
}

int run_cli(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace psr
