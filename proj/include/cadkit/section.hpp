#pragma once

#include "cadkit/image.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/solid.hpp"

#include <json.hpp>

namespace cadkit {

/// Section plane with a deterministic in-plane basis: x is the global axis
/// least aligned with the normal, projected; y = normal x x.
struct SectionPlane {
    Vec3 origin;
    Vec3 normal;
    Vec3 x_axis;
    Vec3 y_axis;

    /// Throws DegeneratePlane for a zero or non-finite normal.
    static SectionPlane make(Vec3 origin, Vec3 normal);

    Vec2 to_plane(Vec3 p) const;
    Vec3 to_world(Vec2 q) const;
    double signed_distance(Vec3 p) const;
};

/// Loops in plane coordinates without the closing point; outer loops
/// counter-clockwise, holes clockwise.
struct SectionPolygon {
    std::vector<std::vector<Vec2>> loops;

    bool empty() const { return loops.empty(); }
    /// Sum of signed loop areas.
    double area() const;
    double perimeter() const;
    bool contains(Vec2 p) const;
    Box2 bounds() const;
};

double signed_area(const std::vector<Vec2>& ring);
bool ring_contains(const std::vector<Vec2>& ring, Vec2 p);

struct SectionOptions {
    int coarse_cells = 64;
    int fine_cells = 1024;
    /// Contour every step, including those with an analytic section.
    bool force_contour = false;
};

/// Throws DegeneratePlane (via SectionPlane::make) and EmptyModel.
SectionPolygon cross_section_solid(const SolidModel& model, const SectionPlane& plane,
                                   const SectionOptions& options = {});

struct MeshSection {
    SectionPolygon polygon;
    /// Chains that could not be closed; they are left out of the polygon.
    int open_chains = 0;
};

/// Throws EmptyMesh.
MeshSection cross_section_mesh(const TriangleMesh& mesh, const SectionPlane& plane);

/// Loops drawn as 1-pixel strokes in a frame fitted to the loops.
RasterImage section_image(const SectionPolygon& section, int width = 512, int height = 512);

/// Section document: {version, kind: "section", plane, loops: [{role, points}]}.
nlohmann::ordered_json section_to_json(const SectionPolygon& section, const SectionPlane& plane);

} // namespace cadkit
