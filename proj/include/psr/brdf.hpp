#pragma once

#include "psr/core.hpp"

#include <algorithm>
#include <cmath>

namespace psr {

/// Base reflectance of every dielectric in the metallic-roughness model.
inline constexpr double kDielectricF0 = 0.04;
/// Cosines are clamped to [kMinCosine, 1] before any division.
inline constexpr double kMinCosine = 1e-4;

/// Metallic-roughness material. Both parameters are clamped to [0, 1] on
/// construction; alpha and k are always derived from roughness.
class Material
{
public:
    Material() = default;
    Material(double metallic, double roughness)
        : metallic_(clamp01(metallic)), roughness_(clamp01(roughness))
    {
    }

    double metallic() const { return metallic_; }
    double roughness() const { return roughness_; }

    /// GGX width, alpha = roughness^2.
    double alpha() const { return roughness_ * roughness_; }
    /// Schlick-GGX geometry parameter, k = roughness^4 / 2.
    double k() const { return 0.5 * alpha() * alpha(); }

    bool operator==(const Material&) const = default;

private:
    double metallic_ = 0.0;
    double roughness_ = 0.5;
};

template <class Scalar>
inline Scalar clamp_cosine(Scalar c)
{
    return std::clamp(c, Scalar(kMinCosine), Scalar(1));
}

/// F0 + (1 - F0)(1 - cos_vh)^5, componentwise.
template <class Derived, class Scalar>
inline auto fresnel_schlick(const Eigen::ArrayBase<Derived>& f0, Scalar cos_vh)
{
    using S = typename Derived::Scalar;
    const S c = clamp01(S(cos_vh));
    const S t = S(1) - c;
    const S t2 = t * t;
    const S w = t2 * t2 * t;
    return (f0 + (S(1) - f0) * w).eval();
}

template <class Scalar>
inline Scalar fresnel_schlick(Scalar f0, Scalar cos_vh)
{
    const Scalar t = Scalar(1) - clamp01(cos_vh);
    const Scalar t2 = t * t;
    return f0 + (Scalar(1) - f0) * t2 * t2 * t;
}

/// Trowbridge-Reitz GGX normal distribution with alpha = roughness^2.
template <class Scalar>
inline Scalar ggx_ndf(Scalar roughness, Scalar cos_nh)
{
    const Scalar alpha = roughness * roughness;
    const Scalar a2 = alpha * alpha;
    const Scalar c = clamp01(cos_nh);
    const Scalar d = c * c * (a2 - Scalar(1)) + Scalar(1);
    const Scalar denom = std::max(Scalar(kPi) * d * d, Scalar(1e-12));
    return a2 / denom;
}

/// Schlick-GGX sub-term n.w / ((n.w)(1 - k) + k).
template <class Scalar>
inline Scalar geometry_schlick_ggx(Scalar cos_nw, Scalar k)
{
    const Scalar c = clamp_cosine(cos_nw);
    return c / (c * (Scalar(1) - k) + k);
}

/// Smith product of the view and light sub-terms with k = roughness^4 / 2.
template <class Scalar>
inline Scalar geometry_smith(Scalar roughness, Scalar cos_nv, Scalar cos_nl)
{
    const Scalar r2 = roughness * roughness;
    const Scalar k = Scalar(0.5) * r2 * r2;
    return geometry_schlick_ggx(cos_nv, k) * geometry_schlick_ggx(cos_nl, k);
}

/// F0 of the metallic-roughness blend: (1 - m) 0.04 + m a.
template <class Derived>
inline auto base_reflectance(const Eigen::ArrayBase<Derived>& albedo, const Material& mat)
{
    using S = typename Derived::Scalar;
    const S m = S(mat.metallic());
    return ((S(1) - m) * S(kDielectricF0) + m * albedo).eval();
}

/// Split-sum specular albedo ((1 - m) 0.04 + m a) F1 + F2, clamped at zero.
template <class Derived, class Scalar>
inline auto specular_albedo(const Eigen::ArrayBase<Derived>& albedo, const Material& mat,
                            Scalar f1, Scalar f2)
{
    using S = typename Derived::Scalar;
    return (base_reflectance(albedo, mat) * S(f1) + S(f2)).max(S(0)).eval();
}

/// Diffuse albedo (1 - m) a.
template <class Derived>
inline auto diffuse_albedo(const Eigen::ArrayBase<Derived>& albedo, const Material& mat)
{
    using S = typename Derived::Scalar;
    return ((S(1) - S(mat.metallic())) * albedo).eval();
}

/// Mirror direction of v about n. Both vectors point away from the surface.
template <class Derived1, class Derived2>
inline auto reflect(const Eigen::MatrixBase<Derived1>& v, const Eigen::MatrixBase<Derived2>& n)
{
    using S = typename Derived1::Scalar;
    return (S(2) * n.dot(v) * n - v).eval();
}

/// Full Cook-Torrance specular lobe D F G / (4 (n.l)(n.v)), times n.l.
/// Returns zero below the horizon of l.
template <class Scalar>
inline rgb_type<Scalar> cook_torrance_cos(const vec3_type<Scalar>& n, const vec3_type<Scalar>& v,
                                          const vec3_type<Scalar>& l,
                                          const rgb_type<Scalar>& f0, Scalar roughness)
{
    const Scalar nl = n.dot(l);
    if (nl <= Scalar(0)) return rgb_type<Scalar>::Zero();
    const vec3_type<Scalar> h = (v + l).normalized();
    const Scalar nv = clamp_cosine(n.dot(v));
    const Scalar nlc = clamp_cosine(nl);
    const Scalar d = ggx_ndf(roughness, n.dot(h));
    const Scalar g = geometry_smith(roughness, nv, nlc);
    const auto f = fresnel_schlick(f0, v.dot(h));
    return f * (d * g / (Scalar(4) * nv * nlc) * nlc);
}

/// GGX half-vector sample in the local frame (z = normal) for uniforms u1, u2.
template <class Scalar>
inline vec3_type<Scalar> sample_ggx_half_local(Scalar u1, Scalar u2, Scalar alpha)
{
    const Scalar a2 = alpha * alpha;
    const Scalar cos2 = (Scalar(1) - u1) / (Scalar(1) + (a2 - Scalar(1)) * u1);
    const Scalar cos_t = std::sqrt(std::clamp(cos2, Scalar(0), Scalar(1)));
    const Scalar sin_t = std::sqrt(std::max(Scalar(0), Scalar(1) - cos_t * cos_t));
    const Scalar phi = Scalar(2 * kPi) * u2;
    return {sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t};
}

/// Cosine-weighted hemisphere sample in the local frame (pdf = cos / pi).
template <class Scalar>
inline vec3_type<Scalar> sample_cosine_local(Scalar u1, Scalar u2)
{
    const Scalar r = std::sqrt(u1);
    const Scalar phi = Scalar(2 * kPi) * u2;
    return {r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(Scalar(0), Scalar(1) - u1))};
}

/// Uniform hemisphere sample in the local frame (pdf = 1 / 2pi).
template <class Scalar>
inline vec3_type<Scalar> sample_uniform_hemisphere_local(Scalar u1, Scalar u2)
{
    const Scalar z = u1;
    const Scalar r = std::sqrt(std::max(Scalar(0), Scalar(1) - z * z));
    const Scalar phi = Scalar(2 * kPi) * u2;
    return {r * std::cos(phi), r * std::sin(phi), z};
}

} // namespace psr
