#include "cadkit/mesh.hpp"

#include "cadkit/errors.hpp"
#include "cadkit/serialization.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cadkit {

std::array<Vec3, 3> TriangleMesh::triangle(std::size_t i) const {
    const auto& t = triangles[i];
    return {vertices[t[0]], vertices[t[1]], vertices[t[2]]};
}

double TriangleMesh::diagonal() const {
    if (vertices.empty()) {
        return 0.0;
    }
    Vec3 lo = vertices.front();
    Vec3 hi = lo;
    for (const auto& v : vertices) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    return norm(hi - lo);
}

TriangleMesh parse_obj(const std::string& text) {
    TriangleMesh mesh;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::MeshFormat, "OBJ line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) {
                fail("vertex needs three coordinates");
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> face;
            std::string ref;
            while (ls >> ref) {
                long idx = 0;
                try {
                    idx = std::stol(ref.substr(0, ref.find('/')));
                } catch (const std::exception&) {
                    fail("bad face index '" + ref + "'");
                }
                const long n = static_cast<long>(mesh.vertices.size());
                if (idx < 0) {
                    idx = n + idx + 1;
                }
                if (idx < 1 || idx > n) {
                    fail("face index out of range");
                }
                face.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (face.size() < 3) {
                fail("face needs at least three vertices");
            }
            for (std::size_t k = 1; k + 1 < face.size(); ++k) {
                mesh.triangles.push_back({face[0], face[k], face[k + 1]});
            }
        }
    }
    return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    return parse_obj(read_text_file(path));
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& v : mesh.vertices) {
        os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    }
    for (const auto& t : mesh.triangles) {
        os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
    write_text_file(path, os.str());
}

TriangleMesh read_stl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 84) {
        throw Error(ErrorCode::MeshFormat, "STL file is shorter than its header");
    }
    std::uint32_t count = 0;
    std::memcpy(&count, data.data() + 80, 4);
    if (data.size() != 84 + 50ull * count) {
        throw Error(ErrorCode::MeshFormat, "not a binary STL (size does not match the triangle count)");
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(3ull * count);
    mesh.triangles.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const char* rec = data.data() + 84 + 50ull * i + 12;
        for (int k = 0; k < 3; ++k) {
            float xyz[3];
            std::memcpy(xyz, rec + 12 * k, 12);
            mesh.vertices.push_back({xyz[0], xyz[1], xyz[2]});
        }
        mesh.triangles.push_back({3 * i, 3 * i + 1, 3 * i + 2});
    }
    return mesh;
}

void write_stl(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::string data(80, '\0');
    const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
    data.append(reinterpret_cast<const char*>(&count), 4);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto tri = mesh.triangle(i);
        Vec3 n = cross(tri[1] - tri[0], tri[2] - tri[0]);
        const double len = norm(n);
        if (len > 0) {
            n = n / len;
        }
        auto put = [&](Vec3 v) {
            const float xyz[3] = {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
            data.append(reinterpret_cast<const char*>(xyz), 12);
        };
        put(n);
        for (const auto& v : tri) {
            put(v);
        }
        data.append(2, '\0');
    }
    write_text_file(path, data);
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") {
        return read_obj(path);
    }
    if (ext == ".stl") {
        return read_stl(path);
    }
    throw Error(ErrorCode::MeshFormat, "unsupported mesh extension '" + ext + "' (expected .obj or .stl)");
}

TriangleMesh box_mesh(Vec3 lo, Vec3 hi) {
    TriangleMesh m;
    for (int k = 0; k < 8; ++k) {
        m.vertices.push_back({k & 1 ? hi.x : lo.x, k & 2 ? hi.y : lo.y, k & 4 ? hi.z : lo.z});
    }
    // Outward-facing quads split along one diagonal.
    const std::array<std::array<std::uint32_t, 4>, 6> quads{{
        {0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5},
    }};
    for (const auto& q : quads) {
        m.triangles.push_back({q[0], q[1], q[2]});
        m.triangles.push_back({q[0], q[2], q[3]});
    }
    return m;
}

} // namespace cadkit
