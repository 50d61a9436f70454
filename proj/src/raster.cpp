#include "psr/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace psr {

GBuffer::GBuffer(int w, int h)
    : width(w), height(h), position(w, h, 3), normal(w, h, 3), depth(w, h, 1),
      mask(w, h, 1), albedo(w, h, 3), flipped(w, h, 1), face(std::size_t(w) * h, -1)
{
}

std::size_t GBuffer::covered_count() const
{
    return std::size_t(std::count_if(mask.data().begin(), mask.data().end(),
                                     [](float m) { return m > 0.5f; }));
}

namespace {

constexpr int kSubpixelBits = 8;
constexpr std::int64_t kSubpixel = std::int64_t(1) << kSubpixelBits;
constexpr double kGuardBand = 4.0;

struct ClipVertex
{
    Vec3 cam;  // camera space: x right, y up, z forward
    Vec3 bary; // barycentric coordinates in the source face
};

struct ScreenVertex
{
    std::int64_t x, y; // fixed point
    double inv_z;
    Vec3 bary_over_z;
};

struct ScreenTri
{
    std::array<ScreenVertex, 3> v;
    std::int64_t area2; // twice the signed area, > 0
    std::array<bool, 3> top_left;
    int face;
    int min_x, min_y, max_x, max_y; // inclusive pixel bounds
};

// Signed distance of a camera-space point to a clip plane; >= 0 is inside.
struct ClipPlane
{
    Vec3 normal;
    double offset;
    double eval(const Vec3& p) const { return normal.dot(p) + offset; }
};

bool lex_less(const Vec3& a, const Vec3& b)
{
    if (a.z() != b.z()) return a.z() < b.z();
    if (a.x() != b.x()) return a.x() < b.x();
    return a.y() < b.y();
}

ClipVertex intersect(const ClipVertex& a, const ClipVertex& b, const ClipPlane& plane)
{
    // Canonical endpoint order keeps shared edges bit-identical across faces.
    const bool swap = lex_less(b.cam, a.cam);
    const ClipVertex& p = swap ? b : a;
    const ClipVertex& q = swap ? a : b;
    const double dp = plane.eval(p.cam);
    const double dq = plane.eval(q.cam);
    const double t = dp / (dp - dq);
    return {p.cam + t * (q.cam - p.cam), p.bary + t * (q.bary - p.bary)};
}

std::vector<ClipVertex> clip_polygon(std::vector<ClipVertex> poly, const std::vector<ClipPlane>& planes)
{
    for (const auto& plane : planes) {
        if (poly.empty()) break;
        std::vector<ClipVertex> out;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& a = poly[i];
            const auto& b = poly[(i + 1) % poly.size()];
            const bool ain = plane.eval(a.cam) >= 0.0;
            const bool bin = plane.eval(b.cam) >= 0.0;
            if (ain) out.push_back(a);
            if (ain != bin) out.push_back(intersect(a, b, plane));
        }
        poly = std::move(out);
    }
    return poly;
}

inline std::int64_t edge(const ScreenVertex& a, const ScreenVertex& b, std::int64_t px, std::int64_t py)
{
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

inline bool is_top_left(const ScreenVertex& a, const ScreenVertex& b)
{
    const std::int64_t dx = b.x - a.x;
    const std::int64_t dy = b.y - a.y;
    return dy < 0 || (dy == 0 && dx > 0);
}

struct Fragment
{
    double depth = std::numeric_limits<double>::infinity();
    int tri = -1;
    int face = std::numeric_limits<int>::max();
    Vec3 bary = Vec3::Zero();
};

} // namespace

GBuffer rasterize(const TriangleMesh& mesh, const Camera& camera, const RasterOptions& opts)
{
    camera.validate();
    const int W = camera.width;
    const int H = camera.height;
    GBuffer gb(W, H);
    if (mesh.faces.empty()) return gb;

    const Mat3 rot = camera.world_to_camera();
    const double tan_y = camera.tan_half_fov_y();
    const double tan_x = tan_y * camera.aspect();
    const std::vector<ClipPlane> planes = {
        {Vec3::UnitZ(), -camera.near},
        {Vec3(-1.0, 0.0, kGuardBand * tan_x), 0.0},
        {Vec3(1.0, 0.0, kGuardBand * tan_x), 0.0},
        {Vec3(0.0, -1.0, kGuardBand * tan_y), 0.0},
        {Vec3(0.0, 1.0, kGuardBand * tan_y), 0.0},
    };

    std::vector<Vec3> cam_verts(mesh.vertices.size());
    for (std::size_t i = 0; i < cam_verts.size(); ++i)
        cam_verts[i] = rot * (mesh.vertices[i] - camera.position);

    // Triangle setup, one face at a time, in face order.
    std::vector<ScreenTri> tris;
    for (int f = 0; f < int(mesh.faces.size()); ++f) {
        const auto& face = mesh.faces[std::size_t(f)];
        std::vector<ClipVertex> poly = {
            {cam_verts[face[0]], Vec3::UnitX()},
            {cam_verts[face[1]], Vec3::UnitY()},
            {cam_verts[face[2]], Vec3::UnitZ()},
        };
        const bool all_inside = std::all_of(poly.begin(), poly.end(), [&](const ClipVertex& v) {
            return std::all_of(planes.begin(), planes.end(), [&](const ClipPlane& p) { return p.eval(v.cam) >= 0.0; });
        });
        if (!all_inside) poly = clip_polygon(std::move(poly), planes);
        if (poly.size() < 3) continue;

        std::vector<ScreenVertex> sv(poly.size());
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Vec3& c = poly[i].cam;
            const double sx = 0.5 * W * (1.0 + c.x() / (c.z() * tan_x));
            const double sy = 0.5 * H * (1.0 - c.y() / (c.z() * tan_y));
            sv[i].x = std::llround(sx * double(kSubpixel));
            sv[i].y = std::llround(sy * double(kSubpixel));
            sv[i].inv_z = 1.0 / c.z();
            sv[i].bary_over_z = poly[i].bary * sv[i].inv_z;
        }
        for (std::size_t i = 1; i + 1 < sv.size(); ++i) {
            ScreenTri t;
            t.v = {sv[0], sv[i], sv[i + 1]};
            std::int64_t area = edge(t.v[0], t.v[1], t.v[2].x, t.v[2].y);
            if (area == 0) continue;
            if (area < 0) {
                std::swap(t.v[1], t.v[2]);
                area = -area;
            }
            t.area2 = area;
            // top_left[i] belongs to the edge opposite vertex i.
            t.top_left = {is_top_left(t.v[1], t.v[2]), is_top_left(t.v[2], t.v[0]),
                          is_top_left(t.v[0], t.v[1])};
            t.face = f;
            std::int64_t lo_x = t.v[0].x, hi_x = t.v[0].x, lo_y = t.v[0].y, hi_y = t.v[0].y;
            for (const auto& v : t.v) {
                lo_x = std::min(lo_x, v.x);
                hi_x = std::max(hi_x, v.x);
                lo_y = std::min(lo_y, v.y);
                hi_y = std::max(hi_y, v.y);
            }
            // Pixel x covers center x * 256 + 128.
            auto to_px_lo = [](std::int64_t v) {
                return int(std::max<std::int64_t>(0, (v - kSubpixel / 2 + kSubpixel - 1) >> kSubpixelBits));
            };
            auto to_px_hi = [](std::int64_t v) { return int((v - kSubpixel / 2) >> kSubpixelBits); };
            t.min_x = to_px_lo(lo_x);
            t.min_y = to_px_lo(lo_y);
            t.max_x = std::min(W - 1, to_px_hi(hi_x));
            t.max_y = std::min(H - 1, to_px_hi(hi_y));
            if (t.min_x > t.max_x || t.min_y > t.max_y) continue;
            tris.push_back(t);
        }
    }

    const int tile = std::max(1, opts.tile_size);
    const int tiles_x = (W + tile - 1) / tile;
    const int tiles_y = (H + tile - 1) / tile;
    std::vector<std::vector<int>> bins(std::size_t(tiles_x) * tiles_y);
    for (int i = 0; i < int(tris.size()); ++i) {
        const auto& t = tris[std::size_t(i)];
        for (int ty = t.min_y / tile; ty <= t.max_y / tile; ++ty)
            for (int tx = t.min_x / tile; tx <= t.max_x / tile; ++tx)
                bins[std::size_t(ty) * tiles_x + tx].push_back(i);
    }

    std::vector<Fragment> frags(std::size_t(W) * H);
    parallel_for(0, bins.size(), [&](std::size_t bin) {
        const int tx = int(bin % std::size_t(tiles_x));
        const int ty = int(bin / std::size_t(tiles_x));
        const int x0 = tx * tile, x1 = std::min(W, x0 + tile);
        const int y0 = ty * tile, y1 = std::min(H, y0 + tile);
        for (int ti : bins[bin]) {
            const auto& t = tris[std::size_t(ti)];
            const int bx0 = std::max(x0, t.min_x), bx1 = std::min(x1 - 1, t.max_x);
            const int by0 = std::max(y0, t.min_y), by1 = std::min(y1 - 1, t.max_y);
            for (int y = by0; y <= by1; ++y) {
                const std::int64_t py = std::int64_t(y) * kSubpixel + kSubpixel / 2;
                for (int x = bx0; x <= bx1; ++x) {
                    const std::int64_t px = std::int64_t(x) * kSubpixel + kSubpixel / 2;
                    const std::int64_t e0 = edge(t.v[1], t.v[2], px, py);
                    const std::int64_t e1 = edge(t.v[2], t.v[0], px, py);
                    const std::int64_t e2 = edge(t.v[0], t.v[1], px, py);
                    if (e0 < 0 || e1 < 0 || e2 < 0) continue;
                    if ((e0 == 0 && !t.top_left[0]) || (e1 == 0 && !t.top_left[1]) ||
                        (e2 == 0 && !t.top_left[2]))
                        continue;
                    const double inv_area = 1.0 / double(t.area2);
                    const double l0 = double(e0) * inv_area;
                    const double l1 = double(e1) * inv_area;
                    const double l2 = double(e2) * inv_area;
                    const double inv_z = l0 * t.v[0].inv_z + l1 * t.v[1].inv_z + l2 * t.v[2].inv_z;
                    const double depth = 1.0 / inv_z;
                    if (depth < camera.near || depth > camera.far) continue;
                    Fragment& fr = frags[std::size_t(y) * W + x];
                    if (depth < fr.depth || (depth == fr.depth && t.face < fr.face)) {
                        fr.depth = depth;
                        fr.tri = ti;
                        fr.face = t.face;
                        fr.bary = (l0 * t.v[0].bary_over_z + l1 * t.v[1].bary_over_z +
                                   l2 * t.v[2].bary_over_z) * depth;
                    }
                }
            }
        }
    });

    parallel_for(0, frags.size(), [&](std::size_t idx) {
        const Fragment& fr = frags[idx];
        if (fr.tri < 0) return;
        const int x = int(idx % std::size_t(W));
        const int y = int(idx / std::size_t(W));
        const auto& face = mesh.faces[std::size_t(fr.face)];
        const Vec3 b = fr.bary / fr.bary.sum();
        const Vec3 pos = b[0] * mesh.vertices[face[0]] + b[1] * mesh.vertices[face[1]] +
                         b[2] * mesh.vertices[face[2]];
        Vec3 n = b[0] * mesh.normals[face[0]] + b[1] * mesh.normals[face[1]] +
                 b[2] * mesh.normals[face[2]];
        const double len = n.norm();
        n = len > 1e-12 ? Vec3(n / len) : Vec3(-camera.forward());
        const Vec3 view = (camera.position - pos).normalized();
        bool flip = false;
        if (n.dot(view) < 0.0) {
            n = -n;
            flip = true;
        }
        gb.position.set_rgb(x, y, pos.array());
        gb.normal.set_rgb(x, y, n.array());
        gb.depth.at(x, y) = float(fr.depth);
        gb.mask.at(x, y) = 1.0f;
        gb.albedo.set_rgb(x, y, mesh.albedo_at(fr.face, b).max(0.0).min(1.0));
        gb.flipped.at(x, y) = flip ? 1.0f : 0.0f;
        gb.face[idx] = fr.face;
    });
    return gb;
}

ImageF depth_linearization(const GBuffer& gbuffer, const Camera& camera)
{
    ImageF out(gbuffer.width, gbuffer.height, 1);
    const Vec3 fwd = camera.forward();
    for (int y = 0; y < gbuffer.height; ++y) {
        for (int x = 0; x < gbuffer.width; ++x) {
            if (!gbuffer.covered(x, y)) continue;
            const Vec3 p(gbuffer.position.at(x, y, 0), gbuffer.position.at(x, y, 1),
                         gbuffer.position.at(x, y, 2));
            out.at(x, y) = float((p - camera.position).dot(fwd));
        }
    }
    return out;
}

} // namespace psr
