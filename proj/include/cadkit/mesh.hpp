#pragma once

#include "cadkit/vec.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cadkit {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    bool empty() const { return triangles.empty(); }
    std::array<Vec3, 3> triangle(std::size_t i) const;
    /// Diagonal of the vertex bounding box.
    double diagonal() const;
};

/// ASCII OBJ: `v` and `f` records; polygons are fan-triangulated.
TriangleMesh parse_obj(const std::string& text);
TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
/// Binary STL.
TriangleMesh read_stl(const std::filesystem::path& path);
void write_stl(const std::filesystem::path& path, const TriangleMesh& mesh);
/// Dispatches on the extension (.obj or .stl). Throws MeshFormat / Io.
TriangleMesh read_mesh(const std::filesystem::path& path);

/// Closed axis-aligned box.
TriangleMesh box_mesh(Vec3 min, Vec3 max);

} // namespace cadkit
