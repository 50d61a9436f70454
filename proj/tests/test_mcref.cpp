#include "psr/mcref.hpp"
#include "psr/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace psr;

namespace {

// Directional albedo of the specular lobe for F0 = f0, by midpoint
// quadrature over the hemisphere. Shares nothing with the sampler.
double specular_quadrature(double nv, double rho, double f0)
{
    const int m = 500;
    const Vec3 n(0, 0, 1), v(std::sqrt(1 - nv * nv), 0, nv);
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
        const double ct = (i + 0.5) / m, st = std::sqrt(1 - ct * ct);
        for (int j = 0; j < 2 * m; ++j) {
            const double ph = (j + 0.5) * kPi / m;
            const Vec3 l(st * std::cos(ph), st * std::sin(ph), ct);
            s += cook_torrance_cos<double>(n, v, l, Rgb::Constant(f0), rho)[0];
        }
    }
    return s * (1.0 / m) * (kPi / m);
}

double stddev(const std::vector<double>& xs)
{
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::sqrt(var / double(xs.size() - 1));
}

} // namespace

TEST_CASE("black environment gives zero")
{
    const EnvironmentMap env = test::constant_env(32, Rgb::Zero());
    const McResult r = integrate_pixel(Vec3::UnitZ(), Vec3(0.2, 0, 1).normalized(), Material(0.5, 0.4),
                                       Rgb::Constant(0.8), env, {256, 1});
    CHECK(r.diffuse.isZero());
    CHECK(r.specular.isZero());
}

TEST_CASE("constant environment, dielectric diffuse is a times c")
{
    const Rgb c(0.5, 1.0, 2.0), a(0.8, 0.4, 0.2);
    const EnvironmentMap env = test::constant_env(32, c);
    const McResult r = integrate_pixel(Vec3::UnitZ(), Vec3(0.3, 0, 1).normalized(), Material(0.0, 0.5), a, env,
                                       {4096, 3});
    CHECK((((r.diffuse - a * c) / (a * c)).abs() <= 0.01).all());
}

TEST_CASE("constant environment, metal specular matches quadrature")
{
    const Rgb c(1.0, 1.5, 0.5), a(0.9, 0.6, 0.3);
    const EnvironmentMap env = test::constant_env(32, c);
    const McResult r = integrate_pixel(Vec3::UnitZ(), Vec3::UnitZ(), Material(1.0, 0.5), a, env, {4096, 4});
    // F0 enters linearly: albedo(F0) = F1 F0 + F2 with F2 = albedo(0).
    const double f2 = specular_quadrature(1.0, 0.5, 0.0);
    const double f1 = specular_quadrature(1.0, 0.5, 1.0) - f2;
    const Rgb expect = (f1 * a + f2) * c;
    CHECK(((r.specular - expect) / expect).abs().maxCoeff() <= 0.02);
    CHECK(r.diffuse.isZero());
}

TEST_CASE("grazing specular for an arbitrary f0")
{
    const EnvironmentMap env = test::constant_env(32, Rgb::Ones());
    const double nv = 0.35;
    const Vec3 v(std::sqrt(1 - nv * nv), 0, nv);
    for (double rho : {0.3, 0.8}) {
        const Rgb s = integrate_specular(Vec3::UnitZ(), v, rho, Rgb::Constant(0.2), env, {1 << 15, 5});
        CHECK(s[0] == doctest::Approx(specular_quadrature(nv, rho, 0.2)).epsilon(0.02));
    }
}

TEST_CASE("background pixels are black and images are seed deterministic")
{
    Camera cam;
    cam.width = cam.height = 24;
    const GBuffer g = rasterize(make_icosphere(2), cam);
    const EnvironmentMap env = make_procedural_environment(64, 3);
    const Material m(0.3, 0.4);
    const McImage a = integrate_image(g, m, env, cam, {64, 9});
    const McImage b = integrate_image(g, m, env, cam, {64, 9});
    const McImage c = integrate_image(g, m, env, cam, {64, 10});
    CHECK(a.color == b.color);
    CHECK_FALSE(a.color == c.color);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            if (!g.covered(x, y)) CHECK(a.color.rgb(x, y).isZero());
            CHECK((a.color.rgb(x, y) >= 0.0).all());
            CHECK((a.color.rgb(x, y) - a.diffuse.rgb(x, y) - a.specular.rgb(x, y)).abs().maxCoeff() <= 1e-5);
        }
}

TEST_CASE("estimator noise falls as one over root n")
{
    const EnvironmentMap env = make_procedural_environment(64, 11);
    const Vec3 n = Vec3(0.2, 0.5, 0.8).normalized(), v = Vec3(0.0, 0.3, 1.0).normalized();
    const Material m(0.5, 0.5);
    std::vector<double> lo, hi;
    for (std::uint64_t s = 0; s < 400; ++s) {
        lo.push_back(integrate_pixel(n, v, m, Rgb::Constant(0.5), env, {128, s}).color().sum());
        hi.push_back(integrate_pixel(n, v, m, Rgb::Constant(0.5), env, {256, s + 1000}).color().sum());
    }
    const double ratio = stddev(lo) / stddev(hi);
    INFO("std ratio " << ratio);
    // 400 draws put roughly 5% relative error on the ratio.
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.15));
}

TEST_CASE("diffuse estimate under a constant environment has no variance")
{
    const EnvironmentMap env = test::constant_env(32, Rgb::Constant(1.7));
    const Vec3 n = Vec3(0.1, -0.3, 0.9).normalized();
    const Rgb first = integrate_pixel(n, n, Material(0.0, 0.5), Rgb::Constant(0.6), env, {16, 0}).diffuse;
    for (std::uint64_t s = 1; s < 16; ++s) {
        const Rgb d = integrate_pixel(n, n, Material(0.0, 0.5), Rgb::Constant(0.6), env, {16, s}).diffuse;
        CHECK((d - first).abs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("oracle comparison statistics")
{
    Camera cam;
    cam.width = cam.height = 16;
    const GBuffer g = rasterize(make_icosphere(2), cam);
    ImageF a(16, 16, 3, 1.0f), b(16, 16, 3, 1.0f);
    for (float& v : b.data()) v = 1.25f;
    const OracleComparison cmp = compare_with_oracle(a, b, g, cam, 0.1);
    CHECK(cmp.masked_pixel_count > 0);
    CHECK(cmp.masked_pixel_count <= g.covered_count());
    CHECK(cmp.mean_rel_l1 == doctest::Approx(0.2));
    CHECK(cmp.p95_rel_l1 == doctest::Approx(0.2));
    CHECK(compare_with_oracle(b, b, g, cam).mean_rel_l1 == 0.0);
}
