#include "psr/image.hpp"
#include "psr/sampler.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

using namespace psr;
namespace fs = std::filesystem;

namespace {

SamplingPolicy policy_with(double prob, int views = 8, std::uint64_t seed = 1)
{
    SamplingPolicy p;
    p.env_pool = {"a", "b", "c", "d"};
    p.per_view_change_prob = prob;
    p.views_per_object = views;
    p.resolution = 32;
    p.seed = seed;
    return p;
}

std::map<std::string, std::string> tree_contents(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return out;
}

} // namespace

TEST_CASE("material grid cells are exact multiples of 0.1")
{
    for (int i = 0; i < kMaterialGridSize; ++i) {
        const auto [m, r] = material_grid_cell(i);
        CHECK(std::abs(m * 10 - std::round(m * 10)) < 1e-12);
        CHECK(std::abs(r * 10 - std::round(r * 10)) < 1e-12);
        CHECK(material_grid_index(m, r) == i);
    }
    CHECK(material_grid_index(0.05, 0.5) == -1);
    CHECK_THROWS_AS(material_grid_cell(kMaterialGridSize), ConfigError);
}

TEST_CASE("change probability 0 shares one pair across all views")
{
    const auto views = sample_conditions(policy_with(0.0, 20), 7);
    for (const auto& v : views) {
        CHECK(v.material_index == views[0].material_index);
        CHECK(v.env_id == views[0].env_id);
    }
    CHECK(views[0].changed);
    for (std::size_t i = 1; i < views.size(); ++i) CHECK_FALSE(views[i].changed);
}

TEST_CASE("change probability 1 redraws every view")
{
    const auto views = sample_conditions(policy_with(1.0, 50), 7);
    for (const auto& v : views) CHECK(v.changed);
    std::set<int> distinct;
    for (const auto& v : views) distinct.insert(v.material_index);
    CHECK(distinct.size() > 30);
}

TEST_CASE("observed change rate matches the probability")
{
    // 100 objects x 100 view transitions: 3 sigma is 0.015.
    std::size_t changed = 0, total = 0;
    for (std::uint64_t obj = 0; obj < 100; ++obj) {
        const auto views = sample_conditions(policy_with(0.5, 101), obj);
        for (std::size_t i = 1; i < views.size(); ++i) {
            changed += views[i].changed;
            ++total;
        }
    }
    CHECK(std::abs(double(changed) / double(total) - 0.5) <= 0.02);
}

TEST_CASE("redrawn materials are uniform over the grid")
{
    std::vector<double> hist(kMaterialGridSize, 0.0);
    std::map<std::string, int> envs;
    int n = 0;
    for (std::uint64_t obj = 0; obj < 200; ++obj)
        for (const auto& v : sample_conditions(policy_with(1.0, 121), obj)) {
            hist[std::size_t(v.material_index)] += 1;
            envs[v.env_id]++;
            ++n;
        }
    const double p = 1.0 / kMaterialGridSize, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
    double chi2 = 0.0;
    for (double h : hist) {
        CHECK(std::abs(h - mean) <= 4 * sigma);
        chi2 += (h - mean) * (h - mean) / mean;
    }
    // 120 degrees of freedom; the 0.1% upper quantile is about 173.
    CHECK(chi2 < 173.0);
    const double pe = 0.25, es = std::sqrt(n * pe * (1 - pe));
    for (const auto& [id, count] : envs) CHECK(std::abs(count - n * pe) <= 4 * es);
}

TEST_CASE("cameras stay inside the policy ranges")
{
    const SamplingPolicy p = policy_with(0.5, 200);
    for (const auto& v : sample_conditions(p, 3)) {
        CHECK(p.fov_range.contains(v.camera.fov_y));
        CHECK(p.radius_range.contains(v.radius));
        CHECK(p.elevation_range.contains(v.elevation_deg));
        CHECK(v.camera.position.norm() == doctest::Approx(v.radius));
        CHECK(std::asin(v.camera.position.y() / v.radius) * 180 / kPi == doctest::Approx(v.elevation_deg));
        CHECK(v.camera.target.isZero());
        v.camera.validate();
    }
    SamplingPolicy fixed = p;
    fixed.fixed_camera = true;
    const auto views = sample_conditions(fixed, 3);
    for (const auto& v : views) CHECK(v.camera.position == views[0].camera.position);
}

TEST_CASE("view streams are deterministic and keyed by seed")
{
    const SamplingPolicy p = policy_with(0.5, 30);
    const auto a = sample_conditions(p, 11), b = sample_conditions(p, 11), c = sample_conditions(p, 12);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].material_index == b[i].material_index);
        CHECK(a[i].env_id == b[i].env_id);
        CHECK(a[i].camera.position == b[i].camera.position);
        differs |= a[i].material_index != c[i].material_index;
    }
    CHECK(differs);
    CHECK(object_seed_for(p, "bunny") == object_seed_for(p, "bunny"));
    CHECK(object_seed_for(p, "bunny") != object_seed_for(p, "dragon"));
}

TEST_CASE("policy validation")
{
    SamplingPolicy p = policy_with(0.5);
    p.env_pool.clear();
    CHECK_THROWS_AS(sample_conditions(p, 0), ConfigError);
    p = policy_with(1.5);
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = policy_with(0.5);
    p.fov_range = {50, 40};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = policy_with(0.5);
    p.elevation_range = {-100, 10};
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("camera json round trip")
{
    const auto v = sample_conditions(policy_with(0.5, 1), 5)[0];
    const Camera back = camera_from_json(camera_to_json(v.camera));
    CHECK(back.position == v.camera.position);
    CHECK(back.fov_y == v.camera.fov_y);
    CHECK(back.width == v.camera.width);
}

TEST_CASE("generate_dataset writes every buffer, reproducibly")
{
    test::TempDir dir("dataset");
    write_pfm(dir / "sky.pfm", make_procedural_environment(64, 1).pixels());
    write_pfm(dir / "room.pfm", make_procedural_environment(64, 2).pixels());
    test::write_text(dir / "tet.obj", "v 0 0 1\nv 1 0 -1\nv -1 0 -1\nv 0 1 0\nf 1 2 4\nf 2 3 4\nf 3 1 4\nf 1 3 2\n");
    test::write_text(dir / "broken.obj", "v 0 0 0\nf 1 2 3\n");

    SamplingPolicy p;
    p.views_per_object = 4;
    p.resolution = 24;
    p.seed = 3;
    DatasetOptions opts;
    opts.prefilter = test::small_prefilter();
    opts.lut_resolution = 16;
    opts.lut_samples = 1024;
    const std::vector<fs::path> meshes = {dir / "tet.obj", dir / "broken.obj"};
    const std::vector<fs::path> envs = {dir / "sky.pfm", dir / "room.pfm"};

    const DatasetSummary s = generate_dataset(meshes, envs, p, dir / "out1", opts);
    REQUIRE(s.manifests.size() == 1);
    CHECK(s.skipped_meshes.size() == 1);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "out1" / "tet"))
        if (e.path().filename() != "manifest.json") ++files;
    CHECK(files == 36);

    std::ifstream in(s.manifests[0]);
    const nlohmann::json m = nlohmann::json::parse(in);
    CHECK(m.at("views").size() == 4);
    for (const auto& v : m.at("views")) {
        const fs::path chain = dir / "out1" / "tet" / v.at("env").at("chain_dir").get<std::string>();
        CHECK(fs::exists(chain / "chain.json"));
        CHECK(fs::exists(dir / "out1" / "tet" / v.at("files").at("color").get<std::string>()));
    }

    generate_dataset(meshes, envs, p, dir / "out2", opts);
    CHECK(tree_contents(dir / "out1") == tree_contents(dir / "out2"));
    CHECK_THROWS_AS(generate_dataset(meshes, {dir / "missing.pfm"}, p, dir / "out3", opts), ConfigError);
}
