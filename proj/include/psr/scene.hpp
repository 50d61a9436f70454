#pragma once

#include "psr/core.hpp"
#include "psr/image.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

namespace psr {

struct UniformAlbedo
{
    Rgb color = Rgb::Constant(0.5);
};

struct VertexAlbedo
{
    std::vector<Rgb> colors;
};

/// Linear-space texture sampled bilinearly with clamp addressing. OBJ
/// convention: uv (0, 0) is the bottom-left corner of the image.
struct TextureAlbedo
{
    ImageF texture;
    std::vector<Vec2> uvs;
};

using AlbedoSource = std::variant<UniformAlbedo, VertexAlbedo, TextureAlbedo>;

struct TriangleMesh
{
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
    std::vector<std::array<int, 3>> faces;
    AlbedoSource albedo = UniformAlbedo{};

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }

    /// Throws DataError when an invariant is broken.
    void validate() const;

    /// Albedo at barycentric coordinates inside a face.
    Rgb albedo_at(int face, const Vec3& bary) const;

    double surface_area() const;
};

struct Camera
{
    Vec3 position{0.0, 0.0, 3.0};
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3::UnitY();
    double fov_y = 45.0; // degrees
    double near = 0.1;
    double far = 100.0;
    int width = 256;
    int height = 256;

    /// Throws ConfigError when an invariant is broken.
    void validate() const;

    Vec3 forward() const { return (target - position).normalized(); }
    Vec3 right() const { return forward().cross(up).normalized(); }
    Vec3 true_up() const { return right().cross(forward()); }

    /// World-to-camera rotation rows: (right, up, forward).
    Mat3 world_to_camera() const;
    double tan_half_fov_y() const;
    double aspect() const { return double(width) / double(height); }
};

struct Ray
{
    Vec3 origin;
    Vec3 direction;
};

/// Pinhole ray through the center of pixel (col, row); row 0 is the top row.
Ray camera_ray(const Camera& camera, double col, double row);

/// Inverse of camera_ray: continuous (col, row) of a world point, or nullopt
/// when the point is not in front of the near plane.
std::optional<Vec2> project_to_pixel(const Camera& camera, const Vec3& world);

struct MeshLoadOptions
{
    /// Optional albedo texture (PNG decoded to linear, or PFM).
    std::optional<std::filesystem::path> texture;
    /// Used when the file carries no per-vertex colors and no texture.
    Rgb default_albedo = Rgb::Constant(0.5);
};

/// Wavefront OBJ with v / vn / vt / f records. Polygons are fan-triangulated.
/// Missing normals become area-weighted smooth normals computed per position.
TriangleMesh load_mesh(const std::filesystem::path& path, const MeshLoadOptions& opts = {});
TriangleMesh parse_obj(std::string_view text, const MeshLoadOptions& opts = {});

/// Centers the bounding box at the origin and scales the longest axis to 2.
TriangleMesh normalize_to_unit_cube(const TriangleMesh& mesh);

std::pair<Vec3, Vec3> bounding_box(const TriangleMesh& mesh);

/// Recomputes area-weighted vertex normals from face geometry.
void compute_vertex_normals(TriangleMesh& mesh);

ImageF load_texture(const std::filesystem::path& path);

// Procedural primitives used by tests and the command line tools.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0,
                            const Vec3& center = Vec3::Zero());
/// Axis-aligned square in the plane z = offset, side length `size`, normal +z.
TriangleMesh make_square(double size, double z_offset, int subdivisions = 1);

} // namespace psr
