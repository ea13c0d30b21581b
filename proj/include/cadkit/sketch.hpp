#pragma once

#include "cadkit/errors.hpp"
#include "cadkit/vec.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cadkit {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383280;

/// Stable handle of a primitive inside one SketchGraph. Ids grow monotonically
/// and are never handed out twice, even after deletion.
struct PrimitiveId {
    std::uint32_t index = 0;

    friend auto operator<=>(const PrimitiveId&, const PrimitiveId&) = default;
};

/// Which part of a primitive a constraint attaches to. Integer codes 1..4.
enum class SubRef : std::uint8_t { Start = 1, End = 2, Mid = 3, Entire = 4 };

enum class PrimitiveType : std::uint8_t { Line, Circle, Arc, Point };

struct Line {
    Vec2 start;
    Vec2 end;

    friend bool operator==(const Line&, const Line&) = default;
};

struct Circle {
    Vec2 center;
    double radius = 1.0;

    friend bool operator==(const Circle&, const Circle&) = default;
};

/// Circular arc stored by center, radius and angles in [0, 2pi). The arc is
/// drawn from theta_start to theta_end, counter-clockwise unless `clockwise`.
struct Arc {
    Vec2 center;
    double radius = 1.0;
    double theta_start = 0.0;
    double theta_end = kPi;
    bool clockwise = false;

    friend bool operator==(const Arc&, const Arc&) = default;
};

struct Point {
    Vec2 position;

    friend bool operator==(const Point&, const Point&) = default;
};

using Primitive = std::variant<Line, Circle, Arc, Point>;

PrimitiveType type_of(const Primitive& p);
std::string_view type_name(PrimitiveType t);
std::optional<PrimitiveType> parse_type_name(std::string_view name);

enum class ConstraintKind : std::uint8_t {
    Coincident,
    Parallel,
    Equal,
    Vertical,
    Horizontal,
    Perpendicular,
    Tangent,
};

inline constexpr ConstraintKind kAllConstraintKinds[] = {
    ConstraintKind::Coincident, ConstraintKind::Parallel,   ConstraintKind::Equal,
    ConstraintKind::Vertical,   ConstraintKind::Horizontal, ConstraintKind::Perpendicular,
    ConstraintKind::Tangent,
};

std::string_view kind_name(ConstraintKind k);
std::optional<ConstraintKind> parse_kind_name(std::string_view name);
std::string_view subref_name(SubRef s);
std::optional<SubRef> parse_subref_name(std::string_view name);

/// True for kinds that constrain one primitive against itself.
bool is_unary(ConstraintKind k);

struct Ref {
    PrimitiveId id;
    SubRef sub = SubRef::Entire;

    friend bool operator==(const Ref&, const Ref&) = default;
};

/// Undirected typed edge. Unary constraints store the same ref twice.
struct Constraint {
    ConstraintKind kind = ConstraintKind::Coincident;
    Ref first;
    Ref second;

    static Constraint unary(ConstraintKind kind, PrimitiveId id) {
        return {kind, {id, SubRef::Entire}, {id, SubRef::Entire}};
    }

    friend bool operator==(const Constraint&, const Constraint&) = default;
};

/// Same kind and same unordered pair of references.
bool same_constraint(const Constraint& a, const Constraint& b);

struct Box2 {
    Vec2 min{0.0, 0.0};
    Vec2 max{0.0, 0.0};
    bool valid = false;

    void expand(Vec2 p);
    double width() const { return max.x - min.x; }
    double height() const { return max.y - min.y; }
    double diagonal() const { return valid ? std::hypot(width(), height()) : 0.0; }
    Vec2 center() const { return 0.5 * (min + max); }
};

// Arc helpers. Angles are radians.
double normalize_angle(double a);
/// Angular extent in (0, 2pi) along the drawn direction.
double arc_span(const Arc& a);
double arc_mid_angle(const Arc& a);
Vec2 arc_point(const Arc& a, double angle);
/// True if `angle` lies on the drawn sweep (inclusive of the end angles).
bool arc_contains_angle(const Arc& a, double angle);
double line_length(const Line& l);

/// Throws InvalidPrimitive when coordinates are non-finite, a radius is not
/// positive or an arc has zero angular span.
void validate_primitive(const Primitive& p);

/// Arcs with angles folded into [0, 2pi). Other primitives are returned as is.
Primitive canonicalize(const Primitive& p);

/// Geometric extent of one primitive (arcs include their axis extremes).
Box2 primitive_bounds(const Primitive& p);

class SketchGraph {
public:
    struct Entry {
        PrimitiveId id;
        Primitive primitive;

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    PrimitiveId add_primitive(const Primitive& p);
    /// Validates references, the kind/arity table and duplicates. Primitives
    /// are not moved; solving is a separate step.
    std::size_t add_constraint(const Constraint& c);
    /// Removes the listed primitives and every constraint touching them.
    /// Unknown ids are ignored. Returns the number of primitives removed.
    std::size_t del_geometries(std::span<const PrimitiveId> ids);

    const std::vector<Entry>& primitives() const { return primitives_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }
    std::size_t size() const { return primitives_.size(); }
    bool empty() const { return primitives_.empty(); }
    std::uint32_t next_id() const { return next_id_; }

    const Primitive* find(PrimitiveId id) const;
    /// Throws DanglingReference for unknown ids.
    const Primitive& at(PrimitiveId id) const;
    std::optional<std::size_t> index_of(PrimitiveId id) const;

    /// Replaces geometry of an existing primitive (used by the solver).
    void set_primitive(PrimitiveId id, const Primitive& p);
    /// Inserts with an explicit id, which must exceed every id seen so far.
    void insert_with_id(PrimitiveId id, const Primitive& p);
    /// Raises the id counter (never lowers it).
    void reserve_ids(std::uint32_t next);
    void clear_constraints() { constraints_.clear(); }
    /// Appends without duplicate detection; references and kinds still checked.
    std::size_t append_constraint_unchecked_duplicates(const Constraint& c);

    /// Full invariant check: primitive validity, resolvable references,
    /// compatible kinds, no duplicates. Throws on the first violation.
    void validate() const;

    Box2 bounds() const;

    friend bool operator==(const SketchGraph&, const SketchGraph&) = default;

private:
    std::vector<Entry> primitives_;
    std::vector<Constraint> constraints_;
    std::uint32_t next_id_ = 0;
};

/// Throws DanglingReference / IncompatibleKind / IncompatibleSubRef.
void check_constraint_admissible(const SketchGraph& sketch, const Constraint& c);

/// Point addressed by a non-Entire sub-reference (a Point primitive also
/// resolves with Entire). Arc Mid is the angular midpoint along the drawn
/// direction; circle Mid is the center.
Vec2 subref_point(const SketchGraph& sketch, Ref ref);
Vec2 subref_point(const Primitive& p, SubRef sub);

/// Whether `sub` names a point on a primitive of type `t`.
bool is_point_subref(PrimitiveType t, SubRef sub);

/// "3" or "3.end". Throws SyntaxError.
Ref parse_ref_spec(std::string_view text);
std::string ref_spec(Ref ref);
/// "coincident(0.end, 1.start)" or "horizontal(2)". Throws SyntaxError.
Constraint parse_constraint_spec(std::string_view text);
std::string constraint_spec(const Constraint& c);

} // namespace cadkit
