#include "cadkit/sketch.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <charconv>
#include <string>

namespace cadkit {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidPrimitive: return "InvalidPrimitive";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::IncompatibleKind: return "IncompatibleKind";
    case ErrorCode::DuplicateConstraint: return "DuplicateConstraint";
    case ErrorCode::EntireHasNoPoint: return "EntireHasNoPoint";
    case ErrorCode::IncompatibleSubRef: return "IncompatibleSubRef";
    case ErrorCode::DegeneratePrimitive: return "DegeneratePrimitive";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptySketch: return "EmptySketch";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::OpenProfile: return "OpenProfile";
    case ErrorCode::InvalidExtrusion: return "InvalidExtrusion";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::UnclosableLoops: return "UnclosableLoops";
    case ErrorCode::MeshFormat: return "MeshFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::DuplicateTool: return "DuplicateTool";
    case ErrorCode::EmptyDocstring: return "EmptyDocstring";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::BadArgument: return "BadArgument";
    case ErrorCode::PlannerUnparseable: return "PlannerUnparseable";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::FixtureExhausted: return "FixtureExhausted";
    case ErrorCode::PlannerConfig: return "PlannerConfig";
    case ErrorCode::SessionBusy: return "SessionBusy";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::InvalidAttachment: return "InvalidAttachment";
    case ErrorCode::AttachmentTooLarge: return "AttachmentTooLarge";
    }
    return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(ErrorCode::AttachmentTooLarge); ++i) {
        const auto code = static_cast<ErrorCode>(i);
        if (error_code_name(code) == name) {
            return code;
        }
    }
    return std::nullopt;
}

PrimitiveType type_of(const Primitive& p) {
    return static_cast<PrimitiveType>(p.index());
}

std::string_view type_name(PrimitiveType t) {
    switch (t) {
    case PrimitiveType::Line: return "line";
    case PrimitiveType::Circle: return "circle";
    case PrimitiveType::Arc: return "arc";
    case PrimitiveType::Point: return "point";
    }
    return "?";
}

std::optional<PrimitiveType> parse_type_name(std::string_view name) {
    for (auto t : {PrimitiveType::Line, PrimitiveType::Circle, PrimitiveType::Arc, PrimitiveType::Point}) {
        if (type_name(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

std::string_view kind_name(ConstraintKind k) {
    switch (k) {
    case ConstraintKind::Coincident: return "coincident";
    case ConstraintKind::Parallel: return "parallel";
    case ConstraintKind::Equal: return "equal";
    case ConstraintKind::Vertical: return "vertical";
    case ConstraintKind::Horizontal: return "horizontal";
    case ConstraintKind::Perpendicular: return "perpendicular";
    case ConstraintKind::Tangent: return "tangent";
    }
    return "?";
}

std::optional<ConstraintKind> parse_kind_name(std::string_view name) {
    for (auto k : kAllConstraintKinds) {
        if (kind_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::string_view subref_name(SubRef s) {
    switch (s) {
    case SubRef::Start: return "start";
    case SubRef::End: return "end";
    case SubRef::Mid: return "mid";
    case SubRef::Entire: return "entire";
    }
    return "?";
}

std::optional<SubRef> parse_subref_name(std::string_view name) {
    for (auto s : {SubRef::Start, SubRef::End, SubRef::Mid, SubRef::Entire}) {
        if (subref_name(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

bool is_unary(ConstraintKind k) {
    return k == ConstraintKind::Horizontal || k == ConstraintKind::Vertical;
}

bool same_constraint(const Constraint& a, const Constraint& b) {
    if (a.kind != b.kind) {
        return false;
    }
    return (a.first == b.first && a.second == b.second) || (a.first == b.second && a.second == b.first);
}

void Box2::expand(Vec2 p) {
    if (!valid) {
        min = max = p;
        valid = true;
        return;
    }
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
}

double normalize_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0.0) {
        r += kTwoPi;
    }
    if (r >= kTwoPi) {
        r = 0.0;
    }
    return r;
}

double arc_span(const Arc& a) {
    double d = a.clockwise ? a.theta_start - a.theta_end : a.theta_end - a.theta_start;
    return normalize_angle(d);
}

double arc_mid_angle(const Arc& a) {
    double half = 0.5 * arc_span(a);
    return normalize_angle(a.clockwise ? a.theta_start - half : a.theta_start + half);
}

Vec2 arc_point(const Arc& a, double angle) {
    return {a.center.x + a.radius * std::cos(angle), a.center.y + a.radius * std::sin(angle)};
}

bool arc_contains_angle(const Arc& a, double angle) {
    double offset = a.clockwise ? a.theta_start - angle : angle - a.theta_start;
    return normalize_angle(offset) <= arc_span(a) + 1e-12;
}

double line_length(const Line& l) {
    return distance(l.start, l.end);
}

namespace {

bool finite(Vec2 v) {
    return std::isfinite(v.x) && std::isfinite(v.y);
}

[[noreturn]] void invalid(const std::string& what) {
    throw Error(ErrorCode::InvalidPrimitive, what);
}

} // namespace

void validate_primitive(const Primitive& p) {
    std::visit(
        [](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, Line>) {
                if (!finite(g.start) || !finite(g.end)) {
                    invalid("line has a non-finite coordinate");
                }
            } else if constexpr (std::is_same_v<T, Circle>) {
                if (!finite(g.center) || !std::isfinite(g.radius)) {
                    invalid("circle has a non-finite parameter");
                }
                if (!(g.radius > 0.0)) {
                    invalid("circle radius must be positive");
                }
            } else if constexpr (std::is_same_v<T, Arc>) {
                if (!finite(g.center) || !std::isfinite(g.radius) || !std::isfinite(g.theta_start) ||
                    !std::isfinite(g.theta_end)) {
                    invalid("arc has a non-finite parameter");
                }
                if (!(g.radius > 0.0)) {
                    invalid("arc radius must be positive");
                }
                if (arc_span(g) == 0.0) {
                    invalid("arc has zero angular span");
                }
            } else {
                if (!finite(g.position)) {
                    invalid("point has a non-finite coordinate");
                }
            }
        },
        p);
}

Primitive canonicalize(const Primitive& p) {
    if (const auto* a = std::get_if<Arc>(&p)) {
        Arc c = *a;
        c.theta_start = normalize_angle(c.theta_start);
        c.theta_end = normalize_angle(c.theta_end);
        return c;
    }
    return p;
}

Box2 primitive_bounds(const Primitive& p) {
    Box2 box;
    std::visit(
        [&box](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, Line>) {
                box.expand(g.start);
                box.expand(g.end);
            } else if constexpr (std::is_same_v<T, Circle>) {
                box.expand(g.center - Vec2{g.radius, g.radius});
                box.expand(g.center + Vec2{g.radius, g.radius});
            } else if constexpr (std::is_same_v<T, Arc>) {
                box.expand(arc_point(g, g.theta_start));
                box.expand(arc_point(g, g.theta_end));
                for (double axis : {0.0, 0.5 * kPi, kPi, 1.5 * kPi}) {
                    if (arc_contains_angle(g, axis)) {
                        box.expand(arc_point(g, axis));
                    }
                }
            } else {
                box.expand(g.position);
            }
        },
        p);
    return box;
}

bool is_point_subref(PrimitiveType t, SubRef sub) {
    switch (t) {
    case PrimitiveType::Line:
    case PrimitiveType::Arc:
        return sub != SubRef::Entire;
    case PrimitiveType::Circle:
        return sub == SubRef::Mid;
    case PrimitiveType::Point:
        return sub == SubRef::Entire;
    }
    return false;
}

Vec2 subref_point(const Primitive& p, SubRef sub) {
    const PrimitiveType t = type_of(p);
    if (sub == SubRef::Entire && t != PrimitiveType::Point) {
        throw Error(ErrorCode::EntireHasNoPoint, "the entire-primitive sub-reference has no single point");
    }
    if (!is_point_subref(t, sub)) {
        throw Error(ErrorCode::IncompatibleSubRef, std::string(subref_name(sub)) + " is not valid on a " +
                                                       std::string(type_name(t)));
    }
    switch (t) {
    case PrimitiveType::Line: {
        const auto& l = std::get<Line>(p);
        if (sub == SubRef::Start) {
            return l.start;
        }
        if (sub == SubRef::End) {
            return l.end;
        }
        return 0.5 * (l.start + l.end);
    }
    case PrimitiveType::Arc: {
        const auto& a = std::get<Arc>(p);
        if (sub == SubRef::Start) {
            return arc_point(a, a.theta_start);
        }
        if (sub == SubRef::End) {
            return arc_point(a, a.theta_end);
        }
        return arc_point(a, arc_mid_angle(a));
    }
    case PrimitiveType::Circle:
        return std::get<Circle>(p).center;
    case PrimitiveType::Point:
        return std::get<Point>(p).position;
    }
    return {};
}

Vec2 subref_point(const SketchGraph& sketch, Ref ref) {
    return subref_point(sketch.at(ref.id), ref.sub);
}

namespace {

[[noreturn]] void incompatible(const Constraint& c, const std::string& why) {
    throw Error(ErrorCode::IncompatibleKind, std::string(kind_name(c.kind)) + ": " + why);
}

bool is_round(PrimitiveType t) {
    return t == PrimitiveType::Circle || t == PrimitiveType::Arc;
}

} // namespace

void check_constraint_admissible(const SketchGraph& sketch, const Constraint& c) {
    const Primitive* pi = sketch.find(c.first.id);
    const Primitive* pj = sketch.find(c.second.id);
    if (pi == nullptr || pj == nullptr) {
        const auto missing = pi == nullptr ? c.first.id : c.second.id;
        throw Error(ErrorCode::DanglingReference, "constraint references unknown primitive " +
                                                      std::to_string(missing.index));
    }
    const PrimitiveType ti = type_of(*pi);
    const PrimitiveType tj = type_of(*pj);
    const bool both_entire = c.first.sub == SubRef::Entire && c.second.sub == SubRef::Entire;
    const bool same = c.first.id == c.second.id;

    switch (c.kind) {
    case ConstraintKind::Horizontal:
    case ConstraintKind::Vertical:
        if (!same) {
            incompatible(c, "expects a single primitive");
        }
        if (ti != PrimitiveType::Line) {
            incompatible(c, "only applies to lines");
        }
        if (!both_entire) {
            throw Error(ErrorCode::IncompatibleSubRef, "horizontal/vertical take the entire line");
        }
        return;
    case ConstraintKind::Parallel:
    case ConstraintKind::Perpendicular:
        if (same) {
            incompatible(c, "expects two distinct lines");
        }
        if (ti != PrimitiveType::Line || tj != PrimitiveType::Line) {
            incompatible(c, "only applies to two lines");
        }
        if (!both_entire) {
            throw Error(ErrorCode::IncompatibleSubRef, "parallel/perpendicular take entire lines");
        }
        return;
    case ConstraintKind::Equal:
        if (same) {
            incompatible(c, "expects two distinct primitives");
        }
        if (!((ti == PrimitiveType::Line && tj == PrimitiveType::Line) || (is_round(ti) && is_round(tj)))) {
            incompatible(c, "needs two lines or two circles/arcs");
        }
        if (!both_entire) {
            throw Error(ErrorCode::IncompatibleSubRef, "equal takes entire primitives");
        }
        return;
    case ConstraintKind::Tangent:
        if (same) {
            incompatible(c, "expects two distinct primitives");
        }
        if (!((ti == PrimitiveType::Line && is_round(tj)) || (is_round(ti) && tj == PrimitiveType::Line) ||
              (is_round(ti) && is_round(tj)))) {
            incompatible(c, "needs a line and a circle/arc, or two circles/arcs");
        }
        if (!both_entire) {
            throw Error(ErrorCode::IncompatibleSubRef, "tangent takes entire primitives");
        }
        return;
    case ConstraintKind::Coincident:
        if (!is_point_subref(ti, c.first.sub) || !is_point_subref(tj, c.second.sub)) {
            incompatible(c, "needs two point-valued references");
        }
        if (c.first == c.second) {
            incompatible(c, "references the same point twice");
        }
        return;
    }
}

PrimitiveId SketchGraph::add_primitive(const Primitive& p) {
    validate_primitive(p);
    PrimitiveId id{next_id_++};
    primitives_.push_back({id, canonicalize(p)});
    return id;
}

std::size_t SketchGraph::add_constraint(const Constraint& c) {
    check_constraint_admissible(*this, c);
    for (const auto& existing : constraints_) {
        if (same_constraint(existing, c)) {
            throw Error(ErrorCode::DuplicateConstraint, "an identical " + std::string(kind_name(c.kind)) +
                                                            " constraint already exists");
        }
    }
    constraints_.push_back(c);
    return constraints_.size() - 1;
}

std::size_t SketchGraph::append_constraint_unchecked_duplicates(const Constraint& c) {
    check_constraint_admissible(*this, c);
    constraints_.push_back(c);
    return constraints_.size() - 1;
}

std::size_t SketchGraph::del_geometries(std::span<const PrimitiveId> ids) {
    std::vector<PrimitiveId> removed;
    for (auto id : ids) {
        if (auto idx = index_of(id)) {
            primitives_.erase(primitives_.begin() + static_cast<std::ptrdiff_t>(*idx));
            removed.push_back(id);
        }
    }
    auto touches = [&removed](const Constraint& c) {
        return std::find(removed.begin(), removed.end(), c.first.id) != removed.end() ||
               std::find(removed.begin(), removed.end(), c.second.id) != removed.end();
    };
    std::erase_if(constraints_, touches);
    return removed.size();
}

std::optional<std::size_t> SketchGraph::index_of(PrimitiveId id) const {
    auto it = std::lower_bound(primitives_.begin(), primitives_.end(), id,
                               [](const Entry& e, PrimitiveId v) { return e.id < v; });
    if (it == primitives_.end() || it->id != id) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - primitives_.begin());
}

const Primitive* SketchGraph::find(PrimitiveId id) const {
    auto idx = index_of(id);
    return idx ? &primitives_[*idx].primitive : nullptr;
}

const Primitive& SketchGraph::at(PrimitiveId id) const {
    const Primitive* p = find(id);
    if (p == nullptr) {
        throw Error(ErrorCode::DanglingReference, "unknown primitive id " + std::to_string(id.index));
    }
    return *p;
}

void SketchGraph::set_primitive(PrimitiveId id, const Primitive& p) {
    auto idx = index_of(id);
    if (!idx) {
        throw Error(ErrorCode::DanglingReference, "unknown primitive id " + std::to_string(id.index));
    }
    if (type_of(p) != type_of(primitives_[*idx].primitive)) {
        throw Error(ErrorCode::InvalidPrimitive, "cannot change the type of primitive " + std::to_string(id.index));
    }
    primitives_[*idx].primitive = canonicalize(p);
}

void SketchGraph::insert_with_id(PrimitiveId id, const Primitive& p) {
    if (id.index < next_id_) {
        throw Error(ErrorCode::InvariantViolation, "primitive id " + std::to_string(id.index) +
                                                       " is not greater than the previous ids");
    }
    validate_primitive(p);
    primitives_.push_back({id, canonicalize(p)});
    next_id_ = id.index + 1;
}

void SketchGraph::reserve_ids(std::uint32_t next) {
    next_id_ = std::max(next_id_, next);
}

void SketchGraph::validate() const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        validate_primitive(primitives_[i].primitive);
        if (i > 0 && !(primitives_[i - 1].id < primitives_[i].id)) {
            throw Error(ErrorCode::InvariantViolation, "primitive ids are not strictly increasing");
        }
        if (primitives_[i].id.index >= next_id_) {
            throw Error(ErrorCode::InvariantViolation, "primitive id beyond the id counter");
        }
    }
    for (std::size_t i = 0; i < constraints_.size(); ++i) {
        check_constraint_admissible(*this, constraints_[i]);
        for (std::size_t j = 0; j < i; ++j) {
            if (same_constraint(constraints_[i], constraints_[j])) {
                throw Error(ErrorCode::DuplicateConstraint, "constraint " + std::to_string(i) +
                                                                " duplicates constraint " + std::to_string(j));
            }
        }
    }
}

Box2 SketchGraph::bounds() const {
    Box2 box;
    for (const auto& e : primitives_) {
        Box2 b = primitive_bounds(e.primitive);
        if (b.valid) {
            box.expand(b.min);
            box.expand(b.max);
        }
    }
    return box;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace

Ref parse_ref_spec(std::string_view text) {
    text = trim(text);
    const auto dot = text.find('.');
    const std::string_view digits = trim(text.substr(0, dot));
    std::uint32_t index = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw Error(ErrorCode::SyntaxError, "bad primitive reference '" + std::string(text) + "'");
    }
    Ref ref{PrimitiveId{index}, SubRef::Entire};
    if (dot != std::string_view::npos) {
        const std::string_view name = trim(text.substr(dot + 1));
        const auto sub = parse_subref_name(name);
        if (!sub) {
            throw Error(ErrorCode::SyntaxError, "unknown sub-reference '" + std::string(name) + "'");
        }
        ref.sub = *sub;
    }
    return ref;
}

std::string ref_spec(Ref ref) {
    std::string out = std::to_string(ref.id.index);
    if (ref.sub != SubRef::Entire) {
        out += '.';
        out += subref_name(ref.sub);
    }
    return out;
}

Constraint parse_constraint_spec(std::string_view text) {
    text = trim(text);
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')') {
        throw Error(ErrorCode::SyntaxError, "expected kind(ref[, ref]) in '" + std::string(text) + "'");
    }
    const std::string_view name = trim(text.substr(0, open));
    const auto kind = parse_kind_name(name);
    if (!kind) {
        throw Error(ErrorCode::SyntaxError, "unknown constraint kind '" + std::string(name) + "'");
    }
    const std::string_view inner = text.substr(open + 1, text.size() - open - 2);
    const auto comma = inner.find(',');
    Constraint c;
    c.kind = *kind;
    c.first = parse_ref_spec(inner.substr(0, comma));
    c.second = comma == std::string_view::npos ? c.first : parse_ref_spec(inner.substr(comma + 1));
    return c;
}

std::string constraint_spec(const Constraint& c) {
    std::string out(kind_name(c.kind));
    out += '(';
    out += ref_spec(c.first);
    if (!(c.first == c.second)) {
        out += ", ";
        out += ref_spec(c.second);
    }
    out += ')';
    return out;
}

} // namespace cadkit
