#pragma once

#include "cadkit/sketch.hpp"

#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace cadkit {

/// Parameterization strategies for presenting primitives as flat parameter
/// records.
enum class Strategy : std::uint8_t { Implicit, PointBased, Overparameterized };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy_name(std::string_view name);

/// Line as base point, unit direction and signed distances along it. The base
/// point is the segment midpoint, so d_start = -L/2 and d_end = +L/2.
struct ImplicitLine {
    Vec2 base;
    Vec2 direction;
    double d_start = 0.0;
    double d_end = 0.0;
};

/// Arc as center, unit direction towards the start point, orientation flag
/// and absolute angles. The radius is carried explicitly so the record can be
/// inverted.
struct ImplicitArc {
    Vec2 center;
    Vec2 direction;
    bool clockwise = false;
    double theta_start = 0.0;
    double theta_end = 0.0;
    double radius = 1.0;
};

using ImplicitRecord = std::variant<ImplicitLine, Circle, ImplicitArc, Point>;

/// Throws DegeneratePrimitive for a zero-length line.
ImplicitRecord to_implicit(const Primitive& p);
/// Throws MalformedRecord for a zero direction or a non-positive radius.
Primitive from_implicit(const ImplicitRecord& rec);

struct ParamField {
    std::string_view name;
    double value = 0.0;
    bool is_flag = false;
};

/// Ordered named parameters of one primitive under a strategy.
struct ParamRecord {
    PrimitiveType type = PrimitiveType::Point;
    std::vector<ParamField> fields;

    std::optional<double> find(std::string_view name) const;
    /// Throws MalformedRecord when the field is missing.
    double get(std::string_view name) const;
};

/// Read-only union of the implicit and point-based parameters.
using OverparamView = ParamRecord;

/// Field names emitted for a type under a strategy, in output order.
const std::vector<std::string_view>& field_names(PrimitiveType t, Strategy s);

/// Flattens a primitive. Implicit lines of zero length throw
/// DegeneratePrimitive; with `lenient` the undefined direction fields are
/// emitted as zeros instead (used for lossless documents).
ParamRecord param_record(const Primitive& p, Strategy s, bool lenient = false);

/// Rebuilds the canonical primitive from a record. Point-based arcs are
/// reconstructed through their start, middle and end points.
Primitive primitive_from_record(const ParamRecord& rec, Strategy s);

/// Throws DegeneratePrimitive for zero-length lines.
OverparamView overparameterize(const Primitive& p);
/// Re-derives the canonical primitive from an overparameterized view.
Primitive from_overparam(const OverparamView& view);

/// Projects a point-based arc's middle point onto the perpendicular bisector
/// of its chord, where an angular midpoint lies. Returns `mid` unchanged when
/// the chord is too short for a stable bisector.
Vec2 arc_midpoint_on_bisector(Vec2 start, Vec2 mid, Vec2 end);

/// Arc whose start, angular midpoint and end best fit the three points (exact
/// when they are consistent). Orientation follows the turn start→mid→end.
std::optional<Arc> arc_through(Vec2 start, Vec2 mid, Vec2 end);

/// Circle through three points; nullopt when they are (nearly) collinear.
std::optional<Circle> circle_through(Vec2 a, Vec2 b, Vec2 c);

} // namespace cadkit
