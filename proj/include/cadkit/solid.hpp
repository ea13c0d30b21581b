#pragma once

#include "cadkit/image.hpp"
#include "cadkit/sketch.hpp"
#include "cadkit/vec.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace cadkit {

/// Chaining tolerance for profile loops, in sketch units.
inline constexpr double kProfileTolerance = 1e-6;
/// Polyline resolution for a full turn when curves are flattened.
inline constexpr int kArcSegments = 720;

/// A closed chain of lines and arcs oriented head to tail, or a single circle.
struct ProfileLoop {
    std::vector<Primitive> edges;

    /// Flattened ring without the closing point.
    std::vector<Vec2> polygon(int segments_per_turn = kArcSegments) const;
    /// Start points of the edges (empty for a circle).
    std::vector<Vec2> vertices() const;
};

/// Closed region bounded by loops under the even-odd rule.
struct Profile {
    std::vector<ProfileLoop> loops;

    /// Exact even-odd test against lines and arcs.
    bool contains(Vec2 p) const;
    Box2 bounds() const;
};

/// Chains lines, arcs and circles into closed loops; points are ignored.
/// Throws OpenProfile when anything stays open or no loop is found.
Profile extract_profile(const SketchGraph& sketch, double tolerance = kProfileTolerance);

enum class ExtrudeType { New, Cut, Join, Intersect };

std::string_view extrude_type_name(ExtrudeType t);
std::optional<ExtrudeType> parse_extrude_type(std::string_view name);

struct ExtrusionOp {
    double theta = 0.0;
    double phi = 0.0;
    double gamma = 0.0;
    Vec3 tau{};
    double sigma = 1.0;
    double d_minus = 0.0;
    double d_plus = 1.0;
    ExtrudeType beta = ExtrudeType::New;

    friend bool operator==(const ExtrusionOp&, const ExtrusionOp&) = default;
};

/// Orthonormal frame of a sketch plane: R = Rz(phi) Ry(theta) Rz(gamma).
struct PlaneFrame {
    Vec3 origin;
    Vec3 ex;
    Vec3 ey;
    Vec3 ez;
};

PlaneFrame sketch_frame(const ExtrusionOp& op);
/// World position of sketch point `uv` at height `h` along the plane normal.
Vec3 sketch_to_world(const ExtrusionOp& op, Vec2 uv, double h);
/// Inverse mapping: (u, v, h).
Vec3 world_to_sketch(const ExtrusionOp& op, Vec3 p);

/// Throws InvalidExtrusion. Wraps phi and gamma into [0, 2pi).
ExtrusionOp validated(const ExtrusionOp& op);

struct SolidStep {
    SketchGraph sketch;
    ExtrusionOp op;
    Profile profile;
};

class SolidModel {
public:
    const std::vector<SolidStep>& steps() const { return steps_; }
    bool empty() const { return steps_.empty(); }
    std::size_t size() const { return steps_.size(); }

    friend SolidModel extrude(const SolidModel& model, const SketchGraph& sketch, const ExtrusionOp& op);

private:
    std::vector<SolidStep> steps_;
};

/// Appends one sketch-extrude step. The first step must be New.
/// Throws OpenProfile or InvalidExtrusion.
SolidModel extrude(const SolidModel& model, const SketchGraph& sketch, const ExtrusionOp& op);

bool step_occupancy(const SolidStep& step, Vec3 p);
/// Steps combine left to right: New and Join as OR, Cut as AND NOT,
/// Intersect as AND.
bool occupancy(const SolidModel& model, Vec3 p);

/// World-space bounding box corners of a step's prism.
std::array<Vec3, 8> step_box_corners(const SolidStep& step);

/// Wireframe polylines: cap loops at both ends plus straight edges through
/// the loop vertices.
std::vector<std::vector<Vec3>> wireframe_edges(const SolidModel& model);

enum class SolidView { Front, Right, Top, Isometric };
inline constexpr std::array<SolidView, 4> kSolidViews{SolidView::Front, SolidView::Right, SolidView::Top,
                                                     SolidView::Isometric};
std::string_view solid_view_name(SolidView v);

/// Orthographic wireframe masks in kSolidViews order. Throws EmptyModel.
std::array<RasterImage, 4> render_solid_views(const SolidModel& model, int width = 512, int height = 512);

nlohmann::ordered_json extrusion_to_json(const ExtrusionOp& op);
ExtrusionOp extrusion_from_json(const nlohmann::ordered_json& j);
/// {version, kind: "solid", steps: [{sketch, extrusion}]}.
nlohmann::ordered_json solid_to_json(const SolidModel& model);
SolidModel solid_from_json(const nlohmann::ordered_json& doc);
SolidModel load_solid(const std::filesystem::path& path);
void save_solid(const std::filesystem::path& path, const SolidModel& model);

} // namespace cadkit
