#include "psr/cli.hpp"
#include "psr/image.hpp"
#include "psr/shade.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

using namespace psr;
namespace fs = std::filesystem;

namespace {

struct RunResult
{
    int code = -1;
    std::string output;
};

// Runs the psr executable named by PSR_EXE; stdout and stderr are captured together.
RunResult run(const test::TempDir& dir, const std::string& args)
{
    const char* exe = std::getenv("PSR_EXE");
    REQUIRE_MESSAGE(exe != nullptr, "PSR_EXE must point at the psr executable");
    const fs::path log = dir / "last_run.log";
    const std::string cmd = "cd '" + dir.path().string() + "' && '" + exe + "' " + args + " > '" + log.string() +
                            "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    r.output.assign(std::istreambuf_iterator<char>(in), {});
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

// Small shared chain for the render-side commands.
const char* kFastChain = "--base-width 64 --samples 128 --diffuse-width 32 --diffuse-samples 256 "
                         "--lut-res 32 --lut-samples 1024";

void make_chain(const test::TempDir& dir)
{
    REQUIRE(run(dir, "make-env --out env.pfm --width 64").code == 0);
    REQUIRE(run(dir, std::string("prefilter --env env.pfm --out chain ") + kFastChain).code == 0);
}

} // namespace

TEST_CASE("prefilter with defaults writes the full chain")
{
    test::TempDir dir("cli");
    REQUIRE(run(dir, "make-env --out env.pfm --width 128").code == 0);
    const RunResult r = run(dir, "prefilter --env env.pfm --out chain");
    CHECK(r.code == 0);
    for (int l = 0; l < 6; ++l) CHECK(fs::exists(dir / ("chain/specular_" + std::to_string(l) + ".pfm")));
    CHECK(fs::exists(dir / "chain/diffuse.pfm"));
    CHECK(fs::exists(dir / "chain/dfg_lut.pfm"));
    const auto run_json = read_json(dir / "chain/run.json");
    CHECK(run_json.at("command") == "prefilter");
    CHECK(read_pfm(dir / "chain/specular_0.pfm").width() == 256);
    CHECK(read_pfm(dir / "chain/specular_5.pfm").width() == 8);
    CHECK(read_pfm(dir / "chain/dfg_lut.pfm").width() == 64);
}

TEST_CASE("configuration errors exit with code 2")
{
    test::TempDir dir("cli");
    RunResult r = run(dir, "prefilter --env nowhere.hdr --out chain");
    CHECK(r.code == 2);
    CHECK(r.output.find("env map not found") != std::string::npos);
    REQUIRE(run(dir, "make-env --out env.pfm --width 64").code == 0);
    CHECK(run(dir, "prefilter --env env.pfm --out chain --levels 1").code == 2);
    CHECK(run(dir, "prefilter --env env.pfm --out chain --lut-samples 10").code == 2);
    CHECK(run(dir, "no-such-command").code == 2);
    CHECK(run(dir, "render --sphere --chain chain --out r --material 1.5,0.2").code == 2);
    CHECK(run(dir, "render --mesh missing.obj --chain chain --out r").code == 2);
}

TEST_CASE("data errors exit with code 3")
{
    test::TempDir dir("cli");
    make_chain(dir);
    test::write_text(dir / "broken.obj", "v 0 0 0\nf 1 2 3\n");
    CHECK(run(dir, "render --mesh broken.obj --chain chain --out r --res 16").code == 3);
    test::write_text(dir / "bad.pfm", "PF\n4 2\n-1.0\n");
    CHECK(run(dir, "prefilter --env bad.pfm --out c2").code == 3);
}

TEST_CASE("render writes a consistent, reproducible decomposition")
{
    test::TempDir dir("cli");
    make_chain(dir);
    REQUIRE(run(dir, "render --sphere --subdiv 3 --chain chain --out r1 --res 32 --material 0.4,0.5").code == 0);
    REQUIRE(run(dir, "render --sphere --subdiv 3 --chain chain --out r2 --res 32 --material 0.4,0.5").code == 0);
    for (const auto& e : fs::directory_iterator(dir / "r1")) {
        if (e.path().filename() == "run.json") continue;
        CHECK(slurp(e.path()) == slurp(dir / "r2" / e.path().filename()));
    }
    const RenderBuffers b = read_render_buffers(dir / "r1", "view");
    const ImageF cd = read_pfm(dir / "r1/view_c_diff.pfm"), cs = read_pfm(dir / "r1/view_c_spec.pfm");
    double worst = 0.0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const Rgb sum = cd.rgb(x, y) + cs.rgb(x, y);
            worst = std::max(worst, (b.color.rgb(x, y) - sum).abs().maxCoeff());
            // Diffuse part is (1 - m) a L_diff.
            const Rgb diff = 0.6 * b.albedo.rgb(x, y) * b.l_diff.rgb(x, y);
            CHECK((cd.rgb(x, y) - diff).abs().maxCoeff() <= 1e-5 * (1 + diff.maxCoeff()));
        }
    CHECK(worst <= 1e-5);

    REQUIRE(run(dir, "render --sphere --subdiv 3 --chain chain --out metal --res 32 --material 1.0,0.1").code == 0);
    for (float v : read_pfm(dir / "metal/view_c_diff.pfm").data()) CHECK(v == 0.0f);
}

TEST_CASE("dataset, recovery, validation and metrics end to end")
{
    test::TempDir dir("cli");
    fs::create_directories(dir / "meshes");
    fs::create_directories(dir / "envs");
    test::write_text(dir / "meshes/tet.obj",
                     "v 0 0 1\nv 1 0 -1\nv -1 0 -1\nv 0 1 0\nf 1 2 4\nf 2 3 4\nf 3 1 4\nf 1 3 2\n");
    REQUIRE(run(dir, "make-env --out envs/a.pfm --width 64").code == 0);
    REQUIRE(run(dir, "--seed 5 make-env --out envs/b.pfm --width 64").code == 0);
    const RunResult gen = run(dir, std::string("gen-dataset --meshes meshes --envs envs --out data --views 4 --res 24 "
                                               "--fixed-camera --prob 1 ") +
                                   kFastChain);
    REQUIRE(gen.code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "data/tet"))
        if (e.path().filename() != "manifest.json") ++files;
    CHECK(files == 36);

    const RunResult rec = run(dir, "recover --manifest data/tet/manifest.json --out rec");
    CHECK(rec.code == 0);
    for (const char* f : {"normal.pfm", "albedo.pfm", "residual.pfm", "status.png", "summary.json"})
        CHECK(fs::exists(dir / "rec" / f));
    const auto summary = read_json(dir / "rec/summary.json");
    CHECK(summary.at("views") == 4);
    CHECK(summary.contains("ground_truth"));

    const RunResult val = run(dir, "validate --sphere --subdiv 3 --env envs/a.pfm --out val --res 16 --spp 256 " +
                                       std::string(kFastChain));
    CHECK(val.code == 0);
    const auto v = read_json(dir / "val/validate.json");
    CHECK(v.at("mean_rel_l1").get<double>() >= 0.0);
    CHECK(v.at("masked_pixel_count").get<int>() > 0);

    const RunResult met = run(dir, "metrics --pred-dir data/tet --gt-dir data/tet --pred-view view_000 "
                                   "--gt-view view_000 --out met");
    CHECK(met.code == 0);
    const auto m = read_json(dir / "met/metrics.json");
    CHECK(m.at("psnr").get<double>() == 99.0);
    CHECK(m.at("ssim").get<double>() == doctest::Approx(1.0));

    const RunResult mesh = run(dir, "metrics --pred-mesh meshes/tet.obj --gt-mesh meshes/tet.obj --points 2048 --out mm");
    CHECK(mesh.code == 0);
    CHECK(read_json(dir / "mm/metrics.json").at("fscore_01").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("in-process entry point")
{
    CHECK(run_cli({"psr", "--version"}) == exit_ok);
    CHECK(run_cli({"psr", "prefilter"}) == exit_config);
}
