#include "psr/shade.hpp"
#include "psr/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace psr;

namespace {

Camera view_camera(int res)
{
    Camera c;
    c.position = Vec3(0.3, 0.6, 2.9);
    c.width = c.height = res;
    return c;
}

struct Fixture
{
    PrefilteredEnvironment pre;
    DfgLut lut;
};

const DfgLut& shared_lut()
{
    static const DfgLut lut = compute_dfg_lut(32, 1024, 3);
    return lut;
}

EnvironmentMap spot_env(int width, double base, double spot)
{
    ImageF img(width, width / 2, 3, float(base));
    // Bright patch behind the camera-facing side of the sphere.
    const Vec2 t = direction_to_texel(Vec3(0.3, 0.6, 2.9).normalized(), width, width / 2);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            img.set_rgb((int(t.x()) + dx + width) % width, int(t.y()) + dy, Rgb::Constant(spot));
    return EnvironmentMap(std::move(img));
}

ImageF scaled(const ImageF& img, float s)
{
    ImageF out = img;
    for (float& v : out.data()) v *= s;
    return out;
}

PrefilteredEnvironment scaled(const PrefilteredEnvironment& pre, float s)
{
    PrefilteredEnvironment out = pre;
    for (auto& m : out.specular_mips) m = scaled(m, s);
    out.diffuse_map = scaled(out.diffuse_map, s);
    return out;
}

} // namespace

TEST_CASE("constant environment, dielectric")
{
    const Rgb c(0.5, 1.0, 2.0);
    const PrefilteredEnvironment pre = prefilter(test::constant_env(64, c), test::small_prefilter());
    const DfgLut& lut = shared_lut();
    const Rgb a(0.8, 0.4, 0.2);
    const Material m(0.0, 0.5);
    for (double nv : {0.3, 0.7, 1.0}) {
        const Vec3 n(0, 0, 1), v(std::sqrt(1 - nv * nv), 0, nv);
        const SplitSumSample s = shade_point(n, v, a, m, pre, lut);
        const Vec2 f = lut.lookup(nv, 0.5);
        CHECK(((s.l_diff - c) / c).abs().maxCoeff() <= 0.01);
        const Rgb spec = s.spec_albedo * s.l_spec;
        const Rgb expect = (0.04 * f.x() + f.y()) * c;
        CHECK(((spec - expect) / expect).abs().maxCoeff() <= 0.01);
        CHECK(((s.color - (a * s.l_diff + spec)) / s.color).abs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("metallic surfaces have no diffuse term")
{
    const PrefilteredEnvironment pre = prefilter(make_procedural_environment(64, 2), test::small_prefilter());
    const Camera cam = view_camera(48);
    const GBuffer g = rasterize(make_icosphere(3), cam);
    const Material m(1.0, 0.3);
    const RenderBuffers b = shade_splitsum(g, m, pre, shared_lut(), cam);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            if (!b.covered(x, y)) continue;
            const Rgb spec = recompute_specular_albedo(b, m, shared_lut(), cam).rgb(x, y) * b.l_spec.rgb(x, y);
            CHECK((b.color.rgb(x, y) - spec).abs().maxCoeff() <= 1e-5 * (1.0 + spec.maxCoeff()));
        }
}

TEST_CASE("highlight area grows with roughness")
{
    const PrefilteredEnvironment pre = prefilter(spot_env(64, 0.05, 400.0), test::small_prefilter(4));
    const Camera cam = view_camera(96);
    const GBuffer g = rasterize(make_icosphere(4), cam);
    std::size_t prev = 0;
    for (double rho : {0.1, 0.3, 0.6}) {
        const RenderBuffers b = shade_splitsum(g, Material(0.9, rho), pre, shared_lut(), cam);
        std::size_t count = 0;
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x)
                if (b.covered(x, y) && b.l_spec.rgb(x, y).maxCoeff() > 0.5) ++count;
        INFO("rho " << rho << " highlight pixels " << count);
        CHECK(count > prev);
        prev = count;
    }
}

TEST_CASE("relighting is exact and linear in the environment")
{
    const PrefilteredEnvironment pre = prefilter(make_procedural_environment(64, 5), test::small_prefilter());
    const Camera cam = view_camera(40);
    const GBuffer g = rasterize(make_icosphere(3), cam);
    const Material m(0.4, 0.45);
    const RenderBuffers base = shade_splitsum(g, m, pre, shared_lut(), cam);
    const RenderBuffers same = relight(g, m, pre, shared_lut(), cam);
    CHECK(same.color == base.color);
    CHECK(same.l_spec == base.l_spec);
    CHECK(same.l_diff == base.l_diff);

    const RenderBuffers twice = relight(g, m, scaled(pre, 2.0f), shared_lut(), cam);
    CHECK(twice.color == scaled(base.color, 2.0f));
    CHECK(twice.l_spec == scaled(base.l_spec, 2.0f));
    CHECK(twice.l_diff == scaled(base.l_diff, 2.0f));
    CHECK(twice.albedo == base.albedo);
    CHECK(twice.normal == base.normal);
}

TEST_CASE("decomposition identity and buffer invariants")
{
    const PrefilteredEnvironment pre = prefilter(make_procedural_environment(64, 6), test::small_prefilter());
    const Camera cam = view_camera(40);
    TriangleMesh mesh = make_icosphere(3);
    mesh.albedo = UniformAlbedo{Rgb(0.7, 0.2, 0.5)};
    const GBuffer g = rasterize(mesh, cam);
    KeyedRng rng{17};
    for (int t = 0; t < 5; ++t) {
        const Material m(rng.uniform(), rng.uniform());
        const RenderBuffers b = shade_splitsum(g, m, pre, shared_lut(), cam);
        CHECK(decomposition_residual(b, m, shared_lut(), cam) <= 1e-5);
        CHECK(b.albedo == g.albedo);
        CHECK(b.normal == g.normal);
        CHECK(b.mask == g.mask);
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) {
                if (b.covered(x, y)) {
                    const Vec3 n = b.normal.rgb(x, y).matrix();
                    const Rgb expect = sample_diffuse(pre, n);
                    CHECK((b.l_diff.rgb(x, y) - expect).abs().maxCoeff() <= 1e-5 * (1 + expect.maxCoeff()));
                    CHECK((b.color.rgb(x, y) >= 0.0).all());
                } else {
                    CHECK(b.color.rgb(x, y).isZero());
                }
            }
    }
}

TEST_CASE("diffuse radiance depends on the normal only")
{
    const PrefilteredEnvironment pre = prefilter(make_procedural_environment(64, 8), test::small_prefilter());
    KeyedRng rng{21};
    for (int i = 0; i < 200; ++i) {
        const Vec3 n = Vec3(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5).normalized();
        Vec3 v1 = Vec3(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5).normalized();
        Vec3 v2 = Vec3(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5).normalized();
        if (v1.dot(n) < 0) v1 = -v1;
        if (v2.dot(n) < 0) v2 = -v2;
        const Material m(rng.uniform(), rng.uniform());
        const Rgb a = shade_point(n, v1, Rgb::Constant(0.5), m, pre, shared_lut()).l_diff;
        const Rgb b = shade_point(n, v2, Rgb::Constant(0.9), Material(0.2, 0.9), pre, shared_lut()).l_diff;
        CHECK((a - b).isZero());
    }
}

TEST_CASE("render buffers survive a write/read round trip")
{
    const PrefilteredEnvironment pre = prefilter(make_procedural_environment(64, 9), test::small_prefilter());
    const Camera cam = view_camera(24);
    const Material m(0.3, 0.6);
    const RenderBuffers b = shade_splitsum(rasterize(make_icosphere(2), cam), m, pre, shared_lut(), cam);
    test::TempDir dir("shade");
    const BufferFiles files = write_render_buffers(dir.path(), "v7", b);
    CHECK(files.color == "v7_color.pfm");
    CHECK(std::filesystem::exists(dir / files.preview));
    const RenderBuffers r = read_render_buffers(dir.path(), "v7");
    CHECK(r.color == b.color);
    CHECK(r.normal == b.normal);
    CHECK(r.depth == b.depth);
    CHECK(r.mask == b.mask);
    CHECK(r.albedo == b.albedo);
    CHECK(r.l_spec == b.l_spec);
    CHECK(r.l_diff == b.l_diff);
    CHECK(r.position == b.position);
    CHECK(decomposition_residual(r, m, shared_lut(), cam) <= 1e-5);
}
