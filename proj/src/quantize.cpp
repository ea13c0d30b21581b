#include "cadkit/quantize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

namespace cadkit {

Normalization Normalization::fit(const Box2& box, double margin) {
    if (!box.valid) {
        return {};
    }
    const double extent = std::max(box.width(), box.height());
    if (!(extent > 0.0)) {
        return {box.center() - Vec2{0.5, 0.5}, 1.0};
    }
    const double side = extent * (1.0 + 2.0 * margin);
    return {box.center() - Vec2{0.5 * side, 0.5 * side}, side};
}

Normalization Normalization::fit(const SketchGraph& sketch, double margin) {
    if (sketch.empty()) {
        throw Error(ErrorCode::EmptySketch, "cannot normalize an empty sketch");
    }
    return fit(quantization_bounds(sketch), margin);
}

Box2 quantization_bounds(const SketchGraph& sketch) {
    Box2 box = sketch.bounds();
    for (const auto& e : sketch.primitives()) {
        if (const auto* a = std::get_if<Arc>(&e.primitive)) {
            box.expand(a->center - Vec2{a->radius, a->radius});
            box.expand(a->center + Vec2{a->radius, a->radius});
        }
    }
    return box;
}

std::span<const TokenKind> token_kinds(PrimitiveType t) {
    using K = TokenKind;
    static constexpr std::array<K, 4> line{K::Coordinate, K::Coordinate, K::Coordinate, K::Coordinate};
    static constexpr std::array<K, 3> circle{K::Coordinate, K::Coordinate, K::Length};
    static constexpr std::array<K, 5> arc{K::Coordinate, K::Coordinate, K::Length, K::Angle, K::Angle};
    static constexpr std::array<K, 2> point{K::Coordinate, K::Coordinate};
    switch (t) {
    case PrimitiveType::Line: return line;
    case PrimitiveType::Circle: return circle;
    case PrimitiveType::Arc: return arc;
    case PrimitiveType::Point: return point;
    }
    return point;
}

int quantize_unit(double u, int bins) {
    if (!std::isfinite(u)) {
        return u > 0 ? bins - 1 : 0;
    }
    const double scaled = std::floor(u * bins);
    return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(bins - 1)));
}

int quantize_angle(double theta, int bins) {
    const int k = static_cast<int>(std::floor(normalize_angle(theta) / kTwoPi * bins));
    return ((k % bins) + bins) % bins;
}

int token_distance(TokenKind kind, int a, int b, int bins) {
    const int d = std::abs(a - b);
    return kind == TokenKind::Angle ? std::min(d, bins - d) : d;
}

QuantizedPrimitive quantize_primitive(const SketchGraph::Entry& e, const Normalization& n, int bins) {
    QuantizedPrimitive q;
    q.id = e.id;
    q.type = type_of(e.primitive);
    auto coord = [&](Vec2 p) {
        const Vec2 u = n.to_unit(p);
        q.tokens.push_back(quantize_unit(u.x, bins));
        q.tokens.push_back(quantize_unit(u.y, bins));
    };
    auto length = [&](double r) { q.tokens.push_back(quantize_unit(r / n.side, bins)); };

    std::visit(
        [&](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, Line>) {
                coord(g.start);
                coord(g.end);
            } else if constexpr (std::is_same_v<T, Circle>) {
                coord(g.center);
                length(g.radius);
            } else if constexpr (std::is_same_v<T, Arc>) {
                coord(g.center);
                length(g.radius);
                q.tokens.push_back(quantize_angle(g.theta_start, bins));
                q.tokens.push_back(quantize_angle(g.theta_end, bins));
                q.clockwise = g.clockwise;
            } else {
                coord(g.position);
            }
        },
        e.primitive);
    return q;
}

QuantizedSketch quantize(const SketchGraph& sketch, const Normalization& n) {
    QuantizedSketch q;
    q.normalization = n;
    q.next_id = sketch.next_id();
    q.constraints = sketch.constraints();
    q.primitives.reserve(sketch.size());
    for (const auto& e : sketch.primitives()) {
        q.primitives.push_back(quantize_primitive(e, n, q.bins));
    }
    return q;
}

QuantizedSketch quantize(const SketchGraph& sketch) {
    return quantize(sketch, Normalization::fit(sketch));
}

SketchGraph dequantize(const QuantizedSketch& q) {
    const auto& n = q.normalization;
    const double bins = q.bins;
    auto center = [&](int k) { return (k + 0.5) / bins; };
    auto coord = [&](int kx, int ky) { return n.from_unit({center(kx), center(ky)}); };
    auto length = [&](int k) { return center(k) * n.side; };
    auto angle = [&](int k) { return center(k) * kTwoPi; };

    SketchGraph out;
    for (const auto& p : q.primitives) {
        const auto& t = p.tokens;
        if (t.size() != token_kinds(p.type).size()) {
            throw Error(ErrorCode::MalformedRecord, "token count does not match the primitive type");
        }
        Primitive prim;
        switch (p.type) {
        case PrimitiveType::Line:
            prim = Line{coord(t[0], t[1]), coord(t[2], t[3])};
            break;
        case PrimitiveType::Circle:
            prim = Circle{coord(t[0], t[1]), length(t[2])};
            break;
        case PrimitiveType::Arc: {
            double ts = angle(t[3]);
            double te = angle(t[4]);
            if (t[3] == t[4]) {
                // Both ends fell into one bin: keep a short sweep inside it.
                const double quarter = 0.25 * kTwoPi / bins;
                ts = p.clockwise ? ts + quarter : ts - quarter;
                te = p.clockwise ? te - quarter : te + quarter;
            }
            prim = Arc{coord(t[0], t[1]), length(t[2]), ts, te, p.clockwise};
            break;
        }
        case PrimitiveType::Point:
            prim = Point{coord(t[0], t[1])};
            break;
        }
        out.insert_with_id(p.id, prim);
    }
    out.reserve_ids(q.next_id);
    for (const auto& c : q.constraints) {
        out.append_constraint_unchecked_duplicates(c);
    }
    return out;
}

} // namespace cadkit
