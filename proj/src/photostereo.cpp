#include "psr/photostereo.hpp"

#include "psr/shade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace psr {

// ---------------------------------------------------------------------------
// Observation set

void PSObservationSet::validate() const
{
    const std::size_t k = colors.size();
    if (k == 0) throw ConfigError("observation set has no conditions");
    if (mask.width() != width || mask.height() != height) throw DimensionError("mask resolution mismatch");
    for (const auto& c : colors) {
        if (c.width() != width || c.height() != height || c.channels() != 3)
            throw DimensionError("observation resolution mismatch");
        for (float v : c.data())
            if (!std::isfinite(v) || v < 0.0f) throw DataError("observation has negative or non-finite color");
    }
    if (!valid.empty()) {
        if (valid.size() != k) throw ConfigError("validity mask count does not match observation count");
        for (const auto& v : valid)
            if (v.width() != width || v.height() != height || v.channels() != 1)
                throw DimensionError("validity mask resolution mismatch");
    }
    const bool lambertian = !lights.empty();
    const bool splitsum_mode = !splitsum.empty();
    if (lambertian == splitsum_mode) throw ConfigError("observation set must hold either lights or split-sum conditions");
    if (lambertian && lights.size() != k) throw ConfigError("light count does not match observation count");
    if (splitsum_mode) {
        if (splitsum.size() != k) throw ConfigError("condition count does not match observation count");
        for (const auto& c : splitsum) {
            if (!c.env || !c.lut) throw ConfigError("split-sum condition is missing its environment or LUT");
            if (c.env->levels() < 1 || c.env->diffuse_map.empty()) throw ConfigError("split-sum condition has an empty environment");
            if (c.view.width() != width || c.view.height() != height || c.view.channels() != 3)
                throw ConfigError("split-sum condition is missing its view map");
        }
    }
    for (const auto& l : lights) {
        if (std::abs(l.direction.norm() - 1.0) > 1e-6) throw ConfigError("light direction must be unit length");
        if ((l.intensity < 0.0).any()) throw ConfigError("light intensity must be non-negative");
    }
}

PSObservationSet PSObservationSet::permuted(const std::vector<int>& order) const
{
    PSObservationSet out = *this;
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.colors[i] = colors[std::size_t(order[i])];
        if (!lights.empty()) out.lights[i] = lights[std::size_t(order[i])];
        if (!splitsum.empty()) out.splitsum[i] = splitsum[std::size_t(order[i])];
        if (!valid.empty()) out.valid[i] = valid[std::size_t(order[i])];
    }
    return out;
}

PSObservationSet PSObservationSet::first(std::size_t k) const
{
    PSObservationSet out = *this;
    out.colors.resize(std::min(k, colors.size()));
    if (!lights.empty()) out.lights.resize(out.colors.size());
    if (!splitsum.empty()) out.splitsum.resize(out.colors.size());
    if (!valid.empty()) out.valid.resize(out.colors.size());
    return out;
}

PSSolution::PSSolution(int w, int h)
    : width(w), height(h), normal(w, h, 3), albedo(w, h, 3), residual(w, h, 1),
      status(std::size_t(w) * h, PixelStatus::masked_out)
{
}

std::size_t PSSolution::count(PixelStatus s) const
{
    return std::size_t(std::count(status.begin(), status.end(), s));
}

ImageF view_map(const ImageF& position, const ImageF& mask, const Vec3& camera_position)
{
    ImageF out(position.width(), position.height(), 3);
    for (int y = 0; y < position.height(); ++y) {
        for (int x = 0; x < position.width(); ++x) {
            if (mask.at(x, y) <= 0.5f) continue;
            const Vec3 p = position.rgb(x, y).matrix();
            out.set_rgb(x, y, (camera_position - p).normalized().array());
        }
    }
    return out;
}

std::vector<ImageF> render_lambertian(const ImageF& normal, const ImageF& albedo, const ImageF& mask,
                                      const std::vector<DirectionalLight>& lights)
{
    std::vector<ImageF> out;
    for (const auto& light : lights) {
        ImageF img(normal.width(), normal.height(), 3);
        for (int y = 0; y < normal.height(); ++y) {
            for (int x = 0; x < normal.width(); ++x) {
                if (mask.at(x, y) <= 0.5f) continue;
                const Vec3 n = normal.rgb(x, y).matrix();
                const double cos = std::max(0.0, light.direction.dot(n));
                img.set_rgb(x, y, albedo.rgb(x, y) * light.intensity * cos);
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shadow thresholding

namespace {

UsableMask threshold_with(const PSObservationSet& obs, const std::vector<double>& taus)
{
    UsableMask usable(obs.colors.size());
    for (std::size_t k = 0; k < obs.colors.size(); ++k) {
        const ImageF& img = obs.colors[k];
        usable[k].assign(img.pixel_count(), 0);
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            const int x = int(i % std::size_t(img.width()));
            const int y = int(i / std::size_t(img.width()));
            usable[k][i] = obs.observed(k, x, y) && (taus[k] <= 0.0 || img.rgb(x, y).maxCoeff() > taus[k]);
        }
    }
    return usable;
}

} // namespace

UsableMask shadow_threshold(const PSObservationSet& obs, double tau)
{
    if (tau < 0.0) throw ConfigError("shadow threshold must be non-negative");
    return threshold_with(obs, std::vector<double>(obs.colors.size(), tau));
}

UsableMask shadow_threshold_relative(const PSObservationSet& obs, double fraction)
{
    std::vector<double> taus;
    for (const auto& img : obs.colors) {
        const float mx = img.data().empty() ? 0.0f : *std::max_element(img.data().begin(), img.data().end());
        taus.push_back(fraction * double(mx));
    }
    return threshold_with(obs, taus);
}

// ---------------------------------------------------------------------------
// Lambertian photometric stereo

PSSolution lambertian_solve(const PSObservationSet& obs, const LambertianOptions& opts)
{
    obs.validate();
    if (obs.lights.empty()) throw ConfigError("lambertian solve requires directional lights");
    const std::size_t K = obs.lights.size();
    if (K < 3) throw ConfigError("lambertian solve requires at least 3 lights");

    for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd s(K, 3);
        for (std::size_t k = 0; k < K; ++k)
            s.row(Eigen::Index(k)) = obs.lights[k].intensity[c] * obs.lights[k].direction.transpose();
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
        const auto& sv = svd.singularValues();
        if (!(sv(2) > 1e-9 * sv(0))) throw ConfigError("light directions do not span 3D (rank-deficient light set)");
    }

    const UsableMask usable = opts.tau ? shadow_threshold(obs, *opts.tau)
                                       : shadow_threshold_relative(obs, opts.relative_tau);
    PSSolution sol(obs.width, obs.height);

    parallel_for(0, std::size_t(obs.width) * obs.height, [&](std::size_t idx) {
        const int x = int(idx % std::size_t(obs.width));
        const int y = int(idx / std::size_t(obs.width));
        if (!obs.covered(x, y)) return;
        sol.status[idx] = PixelStatus::degenerate;

        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < K; ++k)
            if (usable[k][idx]) rows.push_back(k);
        if (rows.size() < 3) return;

        std::array<Vec3, 3> b;
        Eigen::MatrixXd a(rows.size(), 3);
        Eigen::VectorXd rhs(rows.size());
        for (int c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto& light = obs.lights[rows[i]];
                a.row(Eigen::Index(i)) = light.intensity[c] * light.direction.transpose();
                rhs(Eigen::Index(i)) = obs.colors[rows[i]].at(x, y, c);
            }
            const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const auto& sv = svd.singularValues();
            if (!(sv(2) > 0.0) || sv(0) / sv(2) > opts.max_condition) return;
            b[std::size_t(c)] = svd.solve(rhs);
        }

        Vec3 dir = Vec3::Zero();
        Rgb albedo;
        for (int c = 0; c < 3; ++c) {
            const double len = b[std::size_t(c)].norm();
            albedo[c] = len;
            if (len > 1e-12) dir += b[std::size_t(c)] / len;
        }
        if (!(dir.norm() > 1e-12)) return;
        const Vec3 n = dir.normalized();

        double sq = 0.0;
        for (std::size_t k : rows) {
            const Rgb pred = obs.lights[k].intensity * (obs.lights[k].direction.dot(n)) * albedo;
            sq += (pred - obs.colors[k].rgb(x, y)).square().sum();
        }
        sol.normal.set_rgb(x, y, n.array());
        sol.albedo.set_rgb(x, y, albedo);
        sol.residual.at(x, y) = float(std::sqrt(sq / double(3 * rows.size())));
        sol.status[idx] = PixelStatus::ok;
    });
    return sol;
}

// ---------------------------------------------------------------------------
// Split-sum per-pixel problem

SplitSumPixelProblem::SplitSumPixelProblem(const PSObservationSet& obs, int x, int y) : obs_(&obs)
{
    for (std::size_t k = 0; k < obs.splitsum.size(); ++k) {
        if (!obs.observed(k, x, y)) continue;
        conds_.push_back(k);
        views_.push_back(obs.splitsum[k].view.rgb(x, y).matrix().normalized());
        observed_.push_back(obs.colors[k].rgb(x, y));
    }
}

Vec3 SplitSumPixelProblem::exp_normal(const Vec3& base, const Vec2& theta)
{
    const double phi = theta.norm();
    if (phi == 0.0) return base;
    const Mat3 frame = tangent_frame(base);
    const Vec3 w = theta.x() * frame.col(0) + theta.y() * frame.col(1);
    return (std::cos(phi) * base + std::sin(phi) / phi * w).normalized();
}

Eigen::VectorXd SplitSumPixelProblem::residual(const Vec3& n, const Rgb& albedo) const
{
    Eigen::VectorXd r(residual_count());
    for (std::size_t k = 0; k < views_.size(); ++k) {
        const auto& cond = obs_->splitsum[conds_[k]];
        const auto s = shade_point(n, views_[k], albedo, cond.material, *cond.env, *cond.lut);
        r.segment<3>(Eigen::Index(3 * k)) = (s.color - observed_[k]).matrix();
    }
    return r;
}

Eigen::VectorXd SplitSumPixelProblem::residual(const Vec3& base, const Vec2& theta, const Rgb& albedo) const
{
    return residual(exp_normal(base, theta), albedo);
}

Eigen::MatrixXd SplitSumPixelProblem::angle_columns(const Vec3& n, const Rgb& albedo, double step) const
{
    Eigen::MatrixXd j(residual_count(), 2);
    for (int i = 0; i < 2; ++i) {
        Vec2 d = Vec2::Zero();
        d[i] = step;
        j.col(i) = (residual(n, d, albedo) - residual(n, Vec2(-d), albedo)) / (2.0 * step);
    }
    return j;
}

Eigen::MatrixXd SplitSumPixelProblem::albedo_columns(const Vec3& n, const Rgb& albedo, double step) const
{
    Eigen::MatrixXd j(residual_count(), 3);
    for (int c = 0; c < 3; ++c) {
        Rgb plus = albedo, minus = albedo;
        plus[c] += step;
        minus[c] -= step;
        j.col(c) = (residual(n, plus) - residual(n, minus)) / (2.0 * step);
    }
    return j;
}

Eigen::MatrixXd SplitSumPixelProblem::jacobian(const Vec3& n, const Rgb& albedo, double angle_step,
                                               double albedo_step) const
{
    Eigen::MatrixXd j(residual_count(), 5);
    j.leftCols<2>() = angle_columns(n, albedo, angle_step);
    j.rightCols<3>() = albedo_columns(n, albedo, albedo_step);
    return j;
}

std::vector<std::int64_t> SplitSumPixelProblem::cells(const Vec3& n) const
{
    std::vector<std::int64_t> out;
    for (std::size_t k = 0; k < views_.size(); ++k) {
        const auto& cond = obs_->splitsum[conds_[k]];
        const auto c = shade_point_cells(n, views_[k], cond.material, *cond.env, *cond.lut);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

Rgb SplitSumPixelProblem::best_albedo(const Vec3& n) const
{
    // Per channel the prediction is offset + slope * a.
    Rgb num = Rgb::Zero();
    Rgb den = Rgb::Zero();
    for (std::size_t k = 0; k < views_.size(); ++k) {
        const auto& cond = obs_->splitsum[conds_[k]];
        const Rgb offset = shade_point(n, views_[k], Rgb::Zero(), cond.material, *cond.env, *cond.lut).color;
        const Rgb slope = shade_point(n, views_[k], Rgb::Ones(), cond.material, *cond.env, *cond.lut).color - offset;
        num += slope * (observed_[k] - offset);
        den += slope * slope;
    }
    Rgb a;
    for (int c = 0; c < 3; ++c) a[c] = den[c] > 1e-30 ? std::max(0.0, num[c] / den[c]) : 0.5;
    return a;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

PixelSolveResult solve_pixel(const SplitSumPixelProblem& problem, const Vec3& init_normal,
                             const Rgb& init_albedo, const SplitSumOptions& opts)
{
    PixelSolveResult res;
    Vec3 n = init_normal.normalized();
    Rgb a = init_albedo.max(0.0);
    Eigen::VectorXd r = problem.residual(n, a);
    double cost = r.squaredNorm();
    res.accepted_costs.push_back(cost);
    double lambda = opts.initial_lambda;
    bool converged = false;
    Eigen::MatrixXd jac;

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (cost < 1e-28) {
            converged = true;
            break;
        }
        Eigen::MatrixXd ja = problem.angle_columns(n, a, opts.angle_step);
        const Eigen::MatrixXd ja_half = problem.angle_columns(n, a, 0.5 * opts.angle_step);
        for (int c = 0; c < 2; ++c) {
            const double scale = ja_half.col(c).norm() + 1e-12;
            if ((ja.col(c) - ja_half.col(c)).norm() > opts.fd_consistency * scale) ja.col(c) = ja_half.col(c);
        }
        jac.resize(problem.residual_count(), 5);
        jac.leftCols<2>() = ja;
        jac.rightCols<3>() = problem.albedo_columns(n, a, opts.albedo_step);

        const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
        const Eigen::Matrix<double, 5, 1> g = jac.transpose() * r;

        bool accepted = false;
        double step_norm = 0.0;
        while (lambda < 1e12) {
            Eigen::Matrix<double, 5, 5> damped = jtj;
            for (int i = 0; i < 5; ++i) damped(i, i) += lambda * (jtj(i, i) + 1e-12);
            const Eigen::Matrix<double, 5, 1> delta = damped.ldlt().solve(-g);
            if (!delta.allFinite()) {
                lambda *= 4.0;
                continue;
            }
            const Vec3 n_try = SplitSumPixelProblem::exp_normal(n, delta.head<2>());
            const Rgb a_try = (a + delta.tail<3>().array()).max(0.0);
            const Eigen::VectorXd r_try = problem.residual(n_try, a_try);
            const double cost_try = r_try.squaredNorm();
            if (cost_try < cost) {
                step_norm = delta.norm();
                n = n_try;
                a = a_try;
                r = r_try;
                cost = cost_try;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                res.accepted_costs.push_back(cost);
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted || step_norm < opts.step_tolerance) {
            // No damped step lowers the cost: a stationary point to working precision.
            converged = true;
            ++it;
            break;
        }
    }

    res.normal = n;
    res.albedo = a;
    res.iterations = it;
    res.rms = std::sqrt(cost / double(std::max(1, problem.residual_count())));
    res.status = converged ? PixelStatus::ok : PixelStatus::no_converge;

    if (problem.residual_count() < 5) {
        res.status = PixelStatus::degenerate;
    } else if (res.status == PixelStatus::ok) {
        const Eigen::MatrixXd j = problem.jacobian(n, a, opts.angle_step, opts.albedo_step);
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
        const auto& sv = svd.singularValues();
        if (!(sv(4) > 1e-9 * sv(0))) res.status = PixelStatus::degenerate;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Initialization

IrradianceFit fit_irradiance(const ImageF& diffuse_map)
{
    const int w = diffuse_map.width();
    const int h = diffuse_map.height();
    double wsum = 0.0;
    Rgb mean = Rgb::Zero();
    Mat3 first = Mat3::Zero(); // rows: channel, cols: xyz
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 n = texel_to_direction(x + 0.5, y + 0.5, w, h);
            const double sa = std::sin((y + 0.5) / h * kPi);
            const Rgb e = diffuse_map.rgb(x, y);
            wsum += sa;
            mean += sa * e;
            for (int c = 0; c < 3; ++c) first.row(c) += sa * e[c] * n.transpose();
        }
    }
    // Projection onto {1, x, y, z}: the mean of n n^T over the sphere is I / 3.
    IrradianceFit fit;
    fit.ambient = mean / wsum;
    fit.linear = 3.0 * first / wsum;
    return fit;
}

std::optional<std::pair<Vec3, Rgb>> lambertian_init(const SplitSumPixelProblem& problem,
                                                    const PSObservationSet& obs,
                                                    const std::vector<IrradianceFit>& fits)
{
    const auto& conds = problem.conditions();
    const std::size_t K = conds.size();
    std::vector<std::size_t> order;
    double best = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto& m = obs.splitsum[conds[k]].material;
        if (m.metallic() < 1.0) {
            order.push_back(k);
            best = std::max(best, m.roughness() * (1.0 - m.metallic()));
        }
    }
    if (order.empty()) return std::nullopt;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ma = obs.splitsum[conds[a]].material;
        const auto& mb = obs.splitsum[conds[b]].material;
        return ma.roughness() * (1.0 - ma.metallic()) > mb.roughness() * (1.0 - mb.metallic());
    });

    auto diffuseness = [&](std::size_t k) {
        const auto& m = obs.splitsum[conds[k]].material;
        return m.roughness() * (1.0 - m.metallic());
    };
    std::size_t used = 0;
    while (used < order.size() && (used == 0 || diffuseness(order[used]) >= 0.25 * best)) ++used;

    Vec3 mean_view = Vec3::Zero();
    for (const auto& v : problem.views()) mean_view += v;
    mean_view.normalize();

    // Zero-albedo residual is -observed; the zero-albedo prediction is zero
    // except for the dielectric Fresnel bias, which the proxy ignores.
    const Eigen::VectorXd observed = -problem.residual(mean_view, Rgb::Zero());

    for (; used <= order.size(); ++used) {
        Eigen::MatrixXd a(3 * used, 4);
        Eigen::VectorXd rhs(3 * used);
        for (std::size_t i = 0; i < used; ++i) {
            const std::size_t k = order[i];
            const std::size_t g = conds[k];
            const double kd = 1.0 - obs.splitsum[g].material.metallic();
            for (int c = 0; c < 3; ++c) {
                const auto row = Eigen::Index(3 * i + std::size_t(c));
                a(row, 0) = kd * fits[g].ambient[c];
                a.block<1, 3>(row, 1) = kd * fits[g].linear.row(c);
                rhs(row) = observed(Eigen::Index(3 * k + std::size_t(c)));
            }
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (a.rows() < 4 || !(sv(3) > 0.0) || sv(0) / sv(3) > 1e6) continue;
        const Eigen::Vector4d sol = svd.solve(rhs);
        Vec3 b = sol.tail<3>();
        if (!(b.norm() > 1e-12)) continue;
        Vec3 n = b.normalized();
        if (n.dot(mean_view) <= 0.0) {
            // Fold back into the visible hemisphere.
            n = (n - 2.0 * n.dot(mean_view) * mean_view).normalized();
        }
        return std::make_pair(n, problem.best_albedo(n));
    }
    return std::nullopt;
}

std::vector<Vec3> fibonacci_sphere(int count)
{
    std::vector<Vec3> pts;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / double(count);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        pts.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
    }
    return pts;
}

PixelSolveResult solve_pixel_robust(const SplitSumPixelProblem& problem, const Vec3& init_normal,
                                    const Rgb& init_albedo, const SplitSumOptions& opts)
{
    PixelSolveResult best = solve_pixel(problem, init_normal, init_albedo, opts);
    if (opts.restart_rms_fraction <= 0.0 || opts.restart_candidates <= 0) return best;

    double obs_sq = 0.0;
    for (const auto& c : problem.observed()) obs_sq += c.square().sum();
    const double obs_rms = std::sqrt(obs_sq / double(std::max(1, problem.residual_count())));
    auto good_enough = [&](const PixelSolveResult& r) {
        return r.status == PixelStatus::ok && r.rms <= opts.restart_rms_fraction * obs_rms;
    };
    if (good_enough(best)) return best;

    Vec3 mean_view = Vec3::Zero();
    for (const auto& v : problem.views()) mean_view += v;
    mean_view.normalize();

    std::vector<std::pair<double, Vec3>> scored;
    for (const Vec3& n : fibonacci_sphere(opts.restart_candidates)) {
        if (n.dot(mean_view) <= 0.0) continue;
        scored.emplace_back(problem.cost(n, problem.best_albedo(n)), n);
    }
    const auto starts = std::min<std::size_t>(std::size_t(std::max(0, opts.restart_starts)), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(starts), scored.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

    auto better = [](const PixelSolveResult& a, const PixelSolveResult& b) {
        const bool a_ok = a.status == PixelStatus::ok;
        const bool b_ok = b.status == PixelStatus::ok;
        if (a_ok != b_ok) return a_ok;
        return a.rms < b.rms;
    };
    for (std::size_t i = 0; i < starts; ++i) {
        const Vec3& n = scored[i].second;
        PixelSolveResult r = solve_pixel(problem, n, problem.best_albedo(n), opts);
        if (better(r, best)) best = std::move(r);
        if (good_enough(best)) break;
    }
    return best;
}

PSSolution splitsum_solve(const PSObservationSet& obs, const SplitSumOptions& opts)
{
    obs.validate();
    if (obs.splitsum.empty()) throw ConfigError("split-sum solve requires split-sum conditions");
    if (opts.init == InitMode::provided && (!opts.init_normal || !opts.init_albedo))
        throw ConfigError("provided initialization requires normal and albedo maps");

    std::vector<IrradianceFit> fits;
    for (const auto& c : obs.splitsum) fits.push_back(fit_irradiance(c.env->diffuse_map));

    PSSolution sol(obs.width, obs.height);
    parallel_for(0, std::size_t(obs.width) * obs.height, [&](std::size_t idx) {
        const int x = int(idx % std::size_t(obs.width));
        const int y = int(idx / std::size_t(obs.width));
        if (!obs.covered(x, y)) return;
        const SplitSumPixelProblem problem(obs, x, y);
        if (problem.residual_count() < 5) {
            sol.status[idx] = PixelStatus::degenerate;
            return;
        }

        Vec3 mean_view = Vec3::Zero();
        for (const auto& v : problem.views()) mean_view += v;
        Vec3 n0 = mean_view.normalized();
        Rgb a0 = Rgb::Constant(0.5);
        if (opts.init == InitMode::provided) {
            n0 = opts.init_normal->rgb(x, y).matrix();
            n0 = n0.norm() > 1e-12 ? Vec3(n0.normalized()) : Vec3(mean_view.normalized());
            a0 = opts.init_albedo->rgb(x, y);
        } else if (opts.init == InitMode::lambertian) {
            if (const auto init = lambertian_init(problem, obs, fits)) {
                n0 = init->first;
                a0 = init->second;
            }
        }

        const PixelSolveResult res = solve_pixel_robust(problem, n0, a0, opts);
        sol.status[idx] = res.status;
        sol.residual.at(x, y) = float(res.rms);
        if (res.status == PixelStatus::ok) {
            sol.normal.set_rgb(x, y, res.normal.array());
            sol.albedo.set_rgb(x, y, res.albedo);
        }
    });
    return sol;
}

// ---------------------------------------------------------------------------
// Evaluation

double angular_error_deg(const Vec3& a, const Vec3& b)
{
    // atan2 form stays accurate for tiny angles.
    return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / kPi;
}

RecoveryStats evaluate_recovery(const PSSolution& sol, const ImageF& gt_normal, const ImageF& gt_albedo,
                                const std::vector<std::uint8_t>& eval_mask, double angle_tol,
                                double albedo_tol)
{
    RecoveryStats st;
    std::vector<double> albedo_rel;
    std::size_t within = 0;
    for (std::size_t idx = 0; idx < eval_mask.size(); ++idx) {
        if (!eval_mask[idx]) continue;
        ++st.evaluated;
        if (sol.status[idx] != PixelStatus::ok) continue;
        ++st.ok;
        const int x = int(idx % std::size_t(sol.width));
        const int y = int(idx / std::size_t(sol.width));
        const Vec3 n = sol.normal.rgb(x, y).matrix();
        const Vec3 g = gt_normal.rgb(x, y).matrix().normalized();
        const double ang = angular_error_deg(n, g);
        const Rgb ga = gt_albedo.rgb(x, y);
        const double rel = (sol.albedo.rgb(x, y) - ga).matrix().norm() / std::max(ga.matrix().norm(), 1e-12);
        st.angular_deg.push_back(ang);
        albedo_rel.push_back(rel);
        if (ang <= angle_tol && rel <= albedo_tol) ++within;
    }
    auto quantile = [](std::vector<double> v, double q) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        const auto i = std::size_t(std::clamp(q * double(v.size() - 1) + 0.5, 0.0, double(v.size() - 1)));
        return v[i];
    };
    if (!st.angular_deg.empty()) {
        st.mean_angular_deg = std::accumulate(st.angular_deg.begin(), st.angular_deg.end(), 0.0) /
                              double(st.angular_deg.size());
        st.median_angular_deg = quantile(st.angular_deg, 0.5);
        st.p95_angular_deg = quantile(st.angular_deg, 0.95);
        st.median_albedo_rel = quantile(albedo_rel, 0.5);
    }
    st.fraction_within = st.evaluated ? double(within) / double(st.evaluated) : 0.0;
    return st;
}

} // namespace psr
