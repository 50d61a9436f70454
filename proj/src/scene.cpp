#include "psr/scene.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>

namespace psr {

// ---------------------------------------------------------------------------
// TriangleMesh

void TriangleMesh::validate() const
{
    if (faces.empty()) throw DataError("mesh has no faces");
    if (normals.size() != vertices.size()) throw DataError("mesh normal count mismatch");
    const int n = int(vertices.size());
    for (const auto& f : faces)
        for (int idx : f)
            if (idx < 0 || idx >= n) throw DataError("mesh face index out of range");
    for (const auto& v : vertices)
        if (!v.allFinite()) throw DataError("mesh vertex not finite");
    for (const auto& nrm : normals)
        if (!nrm.allFinite() || std::abs(nrm.norm() - 1.0) > 1e-6)
            throw DataError("mesh normal not unit length");
    if (const auto* va = std::get_if<VertexAlbedo>(&albedo)) {
        if (va->colors.size() != vertices.size()) throw DataError("vertex color count mismatch");
        for (const auto& c : va->colors)
            if ((c < 0.0).any() || (c > 1.0).any()) throw DataError("vertex color outside [0,1]");
    }
    if (const auto* ta = std::get_if<TextureAlbedo>(&albedo)) {
        if (ta->uvs.size() != vertices.size()) throw DataError("uv count mismatch");
        if (ta->texture.empty()) throw DataError("empty albedo texture");
    }
}

namespace {

Rgb sample_texture_clamped(const ImageF& tex, const Vec2& uv)
{
    const double fx = uv.x() * tex.width() - 0.5;
    const double fy = (1.0 - uv.y()) * tex.height() - 0.5;
    const double x0f = std::floor(fx);
    const double y0f = std::floor(fy);
    const double tx = fx - x0f;
    const double ty = fy - y0f;
    auto cx = [&](double x) { return std::clamp(int(x), 0, tex.width() - 1); };
    auto cy = [&](double y) { return std::clamp(int(y), 0, tex.height() - 1); };
    const int x0 = cx(x0f), x1 = cx(x0f + 1), y0 = cy(y0f), y1 = cy(y0f + 1);
    const Rgb top = tex.rgb(x0, y0) * (1 - tx) + tex.rgb(x1, y0) * tx;
    const Rgb bot = tex.rgb(x0, y1) * (1 - tx) + tex.rgb(x1, y1) * tx;
    return top * (1 - ty) + bot * ty;
}

} // namespace

Rgb TriangleMesh::albedo_at(int face, const Vec3& bary) const
{
    const auto& f = faces[std::size_t(face)];
    return std::visit(
        [&](const auto& src) -> Rgb {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, UniformAlbedo>) {
                return src.color;
            } else if constexpr (std::is_same_v<T, VertexAlbedo>) {
                return src.colors[f[0]] * bary[0] + src.colors[f[1]] * bary[1] +
                       src.colors[f[2]] * bary[2];
            } else {
                const Vec2 uv = src.uvs[f[0]] * bary[0] + src.uvs[f[1]] * bary[1] +
                                src.uvs[f[2]] * bary[2];
                return sample_texture_clamped(src.texture, uv).max(0.0).min(1.0);
            }
        },
        albedo);
}

double TriangleMesh::surface_area() const
{
    double area = 0.0;
    for (const auto& f : faces)
        area += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
    return area;
}

// ---------------------------------------------------------------------------
// Camera

void Camera::validate() const
{
    if (!(fov_y > 0.0 && fov_y < 180.0)) throw ConfigError("camera fov_y must be in (0, 180)");
    if ((position - target).norm() <= 0.0) throw ConfigError("camera position equals target");
    if (!(near > 0.0) || !(far > near)) throw ConfigError("camera requires 0 < near < far");
    if (width <= 0 || height <= 0) throw ConfigError("camera resolution must be positive");
    if (forward().cross(up).norm() < 1e-12) throw ConfigError("camera up is parallel to view axis");
}

Mat3 Camera::world_to_camera() const
{
    Mat3 m;
    m.row(0) = right().transpose();
    m.row(1) = true_up().transpose();
    m.row(2) = forward().transpose();
    return m;
}

double Camera::tan_half_fov_y() const
{
    return std::tan(0.5 * fov_y * kPi / 180.0);
}

Ray camera_ray(const Camera& camera, double col, double row)
{
    const double t = camera.tan_half_fov_y();
    const double x = (2.0 * (col + 0.5) / camera.width - 1.0) * t * camera.aspect();
    const double y = (1.0 - 2.0 * (row + 0.5) / camera.height) * t;
    const Vec3 dir = (camera.forward() + x * camera.right() + y * camera.true_up()).normalized();
    return {camera.position, dir};
}

std::optional<Vec2> project_to_pixel(const Camera& camera, const Vec3& world)
{
    const Vec3 d = world - camera.position;
    const double z = d.dot(camera.forward());
    if (z <= camera.near) return std::nullopt;
    const double t = camera.tan_half_fov_y();
    const double x = d.dot(camera.right()) / (z * t * camera.aspect());
    const double y = d.dot(camera.true_up()) / (z * t);
    return Vec2(0.5 * (x + 1.0) * camera.width - 0.5, 0.5 * (1.0 - y) * camera.height - 0.5);
}

// ---------------------------------------------------------------------------
// OBJ loading

namespace {

struct ObjCorner
{
    int v = -1;
    int vt = -1;
    int vn = -1;

    auto key() const { return std::tie(v, vt, vn); }
    bool operator<(const ObjCorner& o) const { return key() < o.key(); }
};

[[noreturn]] void obj_error(std::size_t line_no, const std::string& msg)
{
    throw FormatError("obj line " + std::to_string(line_no) + ": " + msg);
}

double parse_double(std::string_view tok, std::size_t line_no)
{
    // std::from_chars for double is available in libstdc++ 11.
    double value = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value))
        obj_error(line_no, "bad number '" + std::string(tok) + "'");
    return value;
}

int resolve_index(std::string_view tok, std::size_t count, std::size_t line_no)
{
    int value = 0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
    if (ec != std::errc() || ptr != end || value == 0)
        obj_error(line_no, "bad index '" + std::string(tok) + "'");
    const long idx = value > 0 ? long(value) - 1 : long(count) + value;
    if (idx < 0 || idx >= long(count)) obj_error(line_no, "index out of range");
    return int(idx);
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

// Newell normal of a polygon; its length is twice the polygon area.
Vec3 newell_normal(const std::vector<Vec3>& pts)
{
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3& a = pts[i];
        const Vec3& b = pts[(i + 1) % pts.size()];
        n.x() += (a.y() - b.y()) * (a.z() + b.z());
        n.y() += (a.z() - b.z()) * (a.x() + b.x());
        n.z() += (a.x() - b.x()) * (a.y() + b.y());
    }
    return n;
}

Vec3 safe_normalize(const Vec3& v)
{
    const double len = v.norm();
    if (!(len > 1e-300)) return Vec3::UnitZ();
    return v / len;
}

} // namespace

ImageF load_texture(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw DataError("texture not found: " + path.string());
    const auto ext = path.extension().string();
    if (ext == ".pfm" || ext == ".PFM") return read_pfm(path);
    if (ext == ".png" || ext == ".PNG") return to_linear(read_png(path));
    throw FormatError("unsupported texture format: " + path.string());
}

TriangleMesh parse_obj(std::string_view text, const MeshLoadOptions& opts)
{
    std::vector<Vec3> positions;
    std::vector<Rgb> colors;
    std::vector<Vec3> file_normals;
    std::vector<Vec2> file_uvs;
    std::vector<std::vector<ObjCorner>> polygons;
    bool any_color = false;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto toks = split_ws(line);
        if (toks.empty()) {
            if (eol == text.size()) break;
            continue;
        }
        const auto& kw = toks[0];
        if (kw == "v") {
            if (toks.size() != 4 && toks.size() != 7) obj_error(line_no, "v expects 3 or 6 values");
            positions.emplace_back(parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                                   parse_double(toks[3], line_no));
            if (toks.size() == 7) {
                any_color = true;
                colors.emplace_back(parse_double(toks[4], line_no), parse_double(toks[5], line_no),
                                    parse_double(toks[6], line_no));
            } else {
                colors.push_back(opts.default_albedo);
            }
        } else if (kw == "vn") {
            if (toks.size() != 4) obj_error(line_no, "vn expects 3 values");
            const Vec3 n(parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                         parse_double(toks[3], line_no));
            if (n.norm() <= 0.0) obj_error(line_no, "zero-length normal");
            file_normals.push_back(n.normalized());
        } else if (kw == "vt") {
            if (toks.size() < 3) obj_error(line_no, "vt expects at least 2 values");
            file_uvs.emplace_back(parse_double(toks[1], line_no), parse_double(toks[2], line_no));
        } else if (kw == "f") {
            if (toks.size() < 4) obj_error(line_no, "face needs at least 3 vertices");
            std::vector<ObjCorner> poly;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                const auto tok = toks[i];
                ObjCorner c;
                const auto s1 = tok.find('/');
                c.v = resolve_index(tok.substr(0, s1), positions.size(), line_no);
                if (s1 != std::string_view::npos) {
                    const auto rest = tok.substr(s1 + 1);
                    const auto s2 = rest.find('/');
                    const auto vt = rest.substr(0, s2);
                    if (!vt.empty()) c.vt = resolve_index(vt, file_uvs.size(), line_no);
                    if (s2 != std::string_view::npos) {
                        const auto vn = rest.substr(s2 + 1);
                        if (!vn.empty()) c.vn = resolve_index(vn, file_normals.size(), line_no);
                    }
                }
                poly.push_back(c);
            }
            polygons.push_back(std::move(poly));
        }
        // Other records (o, g, s, usemtl, mtllib, l, ...) carry nothing we use.
        if (eol == text.size()) break;
    }

    if (polygons.empty()) throw DataError("mesh has no faces");

    // Smooth normals per position, area-weighted over the original polygons.
    std::vector<Vec3> smooth(positions.size(), Vec3::Zero());
    for (const auto& poly : polygons) {
        std::vector<Vec3> pts;
        for (const auto& c : poly) pts.push_back(positions[c.v]);
        const Vec3 n = newell_normal(pts);
        for (const auto& c : poly) smooth[c.v] += n;
    }

    const bool use_texture = opts.texture.has_value();
    TriangleMesh mesh;
    std::map<ObjCorner, int> remap;
    std::vector<Rgb> out_colors;
    std::vector<Vec2> out_uvs;
    auto vertex_for = [&](ObjCorner c) {
        if (!use_texture) c.vt = -1;
        auto [it, inserted] = remap.try_emplace(c, int(mesh.vertices.size()));
        if (inserted) {
            mesh.vertices.push_back(positions[c.v]);
            mesh.normals.push_back(c.vn >= 0 ? file_normals[c.vn] : safe_normalize(smooth[c.v]));
            out_colors.push_back(colors[c.v]);
            out_uvs.push_back(c.vt >= 0 ? file_uvs[c.vt] : Vec2::Zero());
        }
        return it->second;
    };
    for (const auto& poly : polygons) {
        const int first = vertex_for(poly[0]);
        for (std::size_t i = 1; i + 1 < poly.size(); ++i)
            mesh.faces.push_back({first, vertex_for(poly[i]), vertex_for(poly[i + 1])});
    }

    if (use_texture) {
        mesh.albedo = TextureAlbedo{load_texture(*opts.texture), std::move(out_uvs)};
    } else if (any_color) {
        for (auto& c : out_colors) c = c.max(0.0).min(1.0);
        mesh.albedo = VertexAlbedo{std::move(out_colors)};
    } else {
        mesh.albedo = UniformAlbedo{opts.default_albedo};
    }
    mesh.validate();
    return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path, const MeshLoadOptions& opts)
{
    if (!std::filesystem::exists(path)) throw DataError("mesh not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open mesh: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_obj(ss.str(), opts);
}

// ---------------------------------------------------------------------------
// Normalization and normals

std::pair<Vec3, Vec3> bounding_box(const TriangleMesh& mesh)
{
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

TriangleMesh normalize_to_unit_cube(const TriangleMesh& mesh)
{
    if (mesh.vertices.empty() || mesh.faces.empty()) throw DataError("mesh has no faces");
    const auto [lo, hi] = bounding_box(mesh);
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0.0)) throw DegeneracyError("mesh has zero extent on all axes");
    const Vec3 center = 0.5 * (lo + hi);
    const double scale = 2.0 / extent;
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = (v - center) * scale;
    return out;
}

void compute_vertex_normals(TriangleMesh& mesh)
{
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        const Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                           .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        for (int idx : f) acc[idx] += n;
    }
    mesh.normals.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mesh.normals[i] = safe_normalize(acc[i]);
}

// ---------------------------------------------------------------------------
// Primitives

TriangleMesh make_icosphere(int subdivisions, double radius, const Vec3& center)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto [it, inserted] = midpoint.try_emplace(key, int(verts.size()));
            if (inserted) verts.push_back((verts[a] + verts[b]).normalized());
            return it->second;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]);
            const int bc = mid(f[1], f[2]);
            const int ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    TriangleMesh mesh;
    mesh.faces = std::move(faces);
    mesh.normals = verts;
    mesh.vertices.reserve(verts.size());
    for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
    return mesh;
}

TriangleMesh make_square(double size, double z_offset, int subdivisions)
{
    const int n = std::max(1, subdivisions);
    TriangleMesh mesh;
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            mesh.vertices.emplace_back(size * (double(i) / n - 0.5), size * (double(j) / n - 0.5), z_offset);
            mesh.normals.push_back(Vec3::UnitZ());
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = j * (n + 1) + i;
            const int b = a + 1;
            const int c = a + (n + 1);
            const int d = c + 1;
            mesh.faces.push_back({a, b, d});
            mesh.faces.push_back({a, d, c});
        }
    }
    return mesh;
}

} // namespace psr
