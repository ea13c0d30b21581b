#include "generators.hpp"

#include "cadkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cadkit::testing {

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

namespace {

Vec2 random_vec(Rng& rng, double extent) {
    return {uniform(rng, -extent, extent), uniform(rng, -extent, extent)};
}

} // namespace

Line random_line(Rng& rng, double extent) {
    for (;;) {
        Line l{random_vec(rng, extent), random_vec(rng, extent)};
        if (line_length(l) > 0.05 * extent) {
            return l;
        }
    }
}

Circle random_circle(Rng& rng, double extent) {
    return {random_vec(rng, extent), uniform(rng, 0.05 * extent, 0.5 * extent)};
}

Arc random_arc(Rng& rng, double extent) {
    const double ts = uniform(rng, 0.0, kTwoPi);
    const double span = uniform(rng, 0.2, kTwoPi - 0.2);
    const bool cw = uniform_int(rng, 0, 1) == 1;
    const double te = normalize_angle(cw ? ts - span : ts + span);
    return {random_vec(rng, extent), uniform(rng, 0.05 * extent, 0.5 * extent), ts, te, cw};
}

Point random_point(Rng& rng, double extent) {
    return {random_vec(rng, extent)};
}

Primitive random_primitive(Rng& rng, double extent) {
    switch (uniform_int(rng, 0, 3)) {
    case 0: return random_line(rng, extent);
    case 1: return random_circle(rng, extent);
    case 2: return random_arc(rng, extent);
    default: return random_point(rng, extent);
    }
}

SketchGraph random_sketch(Rng& rng, int n, double extent) {
    SketchGraph s;
    for (int i = 0; i < n; ++i) {
        s.add_primitive(random_primitive(rng, extent));
    }
    return s;
}

namespace {

Vec2 grid_point(Rng& rng) {
    return {static_cast<double>(uniform_int(rng, 0, 8)), static_cast<double>(uniform_int(rng, 0, 8))};
}

Vec2 last_endpoint(const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        return l->end;
    }
    if (const auto* a = std::get_if<Arc>(&p)) {
        return arc_point(*a, a->theta_end);
    }
    if (const auto* pt = std::get_if<Point>(&p)) {
        return pt->position;
    }
    return std::get<Circle>(p).center;
}

Vec2 snap(Vec2 v) {
    return {std::round(v.x), std::round(v.y)};
}

bool same_round(const Primitive& a, const Primitive& b) {
    auto key = [](const Primitive& p) -> std::pair<Vec2, double> {
        if (const auto* c = std::get_if<Circle>(&p)) {
            return {c->center, c->radius};
        }
        const auto& arc = std::get<Arc>(p);
        return {arc.center, arc.radius};
    };
    auto ka = key(a);
    auto kb = key(b);
    return distance(ka.first, kb.first) < 1e-9;
}

bool is_round_primitive(const Primitive& p) {
    return std::holds_alternative<Circle>(p) || std::holds_alternative<Arc>(p);
}

} // namespace

SketchGraph grid_sketch(Rng& rng, int n) {
    SketchGraph s;
    std::vector<Primitive> made;
    while (static_cast<int>(made.size()) < n) {
        const bool chain = !made.empty() && uniform_int(rng, 0, 9) < 6;
        const Vec2 anchor = chain ? snap(last_endpoint(made.back())) : grid_point(rng);
        Primitive p;
        const int kind = uniform_int(rng, 0, 9);
        if (kind < 5) {
            Vec2 end = grid_point(rng);
            if (uniform_int(rng, 0, 9) < 5) {
                if (uniform_int(rng, 0, 1) == 0) {
                    end.y = anchor.y;
                } else {
                    end.x = anchor.x;
                }
            }
            if (distance(anchor, end) < 1.0) {
                continue;
            }
            p = Line{anchor, end};
        } else if (kind < 7) {
            const double r = uniform_int(rng, 1, 3);
            const int q0 = uniform_int(rng, 0, 3);
            const int quarters = uniform_int(rng, 1, 3);
            const bool cw = uniform_int(rng, 0, 1) == 1;
            const double ts = q0 * kPi / 2.0;
            const double te = normalize_angle(ts + (cw ? -1.0 : 1.0) * quarters * kPi / 2.0);
            // Place the arc so that its start point sits on the anchor.
            const Vec2 center = snap(anchor - r * Vec2{std::cos(ts), std::sin(ts)});
            p = Arc{center, r, ts, te, cw};
        } else if (kind < 9) {
            p = Circle{grid_point(rng), static_cast<double>(uniform_int(rng, 1, 3))};
        } else {
            p = Point{anchor};
        }
        bool clash = false;
        if (is_round_primitive(p)) {
            for (const auto& m : made) {
                if (is_round_primitive(m) && same_round(m, p)) {
                    clash = true;
                }
            }
        }
        if (clash) {
            continue;
        }
        made.push_back(p);
        s.add_primitive(p);
    }
    return s;
}

namespace {

double norm_of(const std::vector<double>& r) {
    double sq = 0.0;
    for (double v : r) {
        sq += v * v;
    }
    return std::sqrt(sq);
}

void try_add(SketchGraph& sketch, const Constraint& c, double tol) {
    try {
        check_constraint_admissible(sketch, c);
    } catch (const Error&) {
        return;
    }
    if (norm_of(residual(sketch, c)) > tol) {
        return;
    }
    try {
        sketch.add_constraint(c);
    } catch (const Error&) {
    }
}

} // namespace

void detect_constraints(SketchGraph& sketch, double tol) {
    const auto entries = sketch.primitives();
    const SubRef point_subs[] = {SubRef::Start, SubRef::End, SubRef::Mid, SubRef::Entire};
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const PrimitiveId a = entries[i].id;
        for (auto k : {ConstraintKind::Horizontal, ConstraintKind::Vertical}) {
            try_add(sketch, Constraint::unary(k, a), tol);
        }
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            const PrimitiveId b = entries[j].id;
            for (auto k : {ConstraintKind::Parallel, ConstraintKind::Perpendicular, ConstraintKind::Equal,
                           ConstraintKind::Tangent}) {
                try_add(sketch, {k, {a, SubRef::Entire}, {b, SubRef::Entire}}, tol);
            }
            for (auto sa : point_subs) {
                for (auto sb : point_subs) {
                    if (!is_point_subref(type_of(entries[i].primitive), sa) ||
                        !is_point_subref(type_of(entries[j].primitive), sb)) {
                        continue;
                    }
                    try_add(sketch, {ConstraintKind::Coincident, {a, sa}, {b, sb}}, tol);
                }
            }
        }
    }
}

SketchGraph perturb(const SketchGraph& sketch, Rng& rng, double amount) {
    SketchGraph out = sketch;
    auto jitter = [&](Vec2 v) { return v + Vec2{uniform(rng, -amount, amount), uniform(rng, -amount, amount)}; };
    for (const auto& e : sketch.primitives()) {
        Primitive p = e.primitive;
        std::visit(
            [&](auto& g) {
                using T = std::decay_t<decltype(g)>;
                if constexpr (std::is_same_v<T, Line>) {
                    g.start = jitter(g.start);
                    g.end = jitter(g.end);
                } else if constexpr (std::is_same_v<T, Circle>) {
                    g.center = jitter(g.center);
                    g.radius += uniform(rng, -amount, amount);
                } else if constexpr (std::is_same_v<T, Arc>) {
                    g.center = jitter(g.center);
                    g.radius += uniform(rng, -amount, amount);
                    g.theta_start += uniform(rng, -amount, amount);
                    g.theta_end += uniform(rng, -amount, amount);
                } else {
                    g.position = jitter(g.position);
                }
            },
            p);
        out.set_primitive(e.id, p);
    }
    return out;
}

ConsistentCase consistent_case(Rng& rng, int min_primitives, int max_primitives, double noise) {
    ConsistentCase c;
    c.truth = grid_sketch(rng, uniform_int(rng, min_primitives, max_primitives));
    detect_constraints(c.truth);
    c.drawn = perturb(c.truth, rng, noise);
    return c;
}

} // namespace cadkit::testing

namespace cadkit::testing {

TriangleMesh icosphere(int levels, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& v : m.vertices) {
        v = v / norm(v);
    }
    for (int level = 0; level < levels; ++level) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) {
                return it->second;
            }
            const Vec3 p = 0.5 * (m.vertices[a] + m.vertices[b]);
            m.vertices.push_back(p / norm(p));
            const auto id = static_cast<std::uint32_t>(m.vertices.size() - 1);
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        for (const auto& tri : m.triangles) {
            const auto a = midpoint(tri[0], tri[1]);
            const auto b = midpoint(tri[1], tri[2]);
            const auto c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) {
        v = radius * v;
    }
    return m;
}

SketchGraph square_sketch(double x0, double y0, double side) {
    SketchGraph s;
    const Vec2 a{x0, y0};
    const Vec2 b{x0 + side, y0};
    const Vec2 c{x0 + side, y0 + side};
    const Vec2 d{x0, y0 + side};
    s.add_primitive(Line{a, b});
    s.add_primitive(Line{b, c});
    s.add_primitive(Line{c, d});
    s.add_primitive(Line{d, a});
    return s;
}

SketchGraph slot_sketch(Vec2 a, Vec2 b, double radius) {
    const Vec2 d = (b - a) / distance(a, b);
    const Vec2 n = perp(d);
    const double ang = std::atan2(d.y, d.x);
    SketchGraph s;
    s.add_primitive(Line{a - radius * n, b - radius * n});
    s.add_primitive(Arc{b, radius, normalize_angle(ang - kPi / 2), normalize_angle(ang + kPi / 2), false});
    s.add_primitive(Line{b + radius * n, a + radius * n});
    s.add_primitive(Arc{a, radius, normalize_angle(ang + kPi / 2), normalize_angle(ang - kPi / 2), false});
    return s;
}

SketchGraph random_polygon_sketch(Rng& rng, int vertices, double extent) {
    // Star-shaped around the origin so the ring is simple.
    std::vector<double> angles;
    for (int i = 0; i < vertices; ++i) {
        angles.push_back(uniform(rng, 0.0, kTwoPi));
    }
    std::sort(angles.begin(), angles.end());
    std::vector<Vec2> pts;
    for (double a : angles) {
        const double r = uniform(rng, 0.3 * extent, extent);
        pts.push_back({r * std::cos(a), r * std::sin(a)});
    }
    SketchGraph s;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 p = pts[i];
        const Vec2 q = pts[(i + 1) % pts.size()];
        if (i % 2 == 1) {
            // Flip every other edge so chaining must reverse some of them.
            s.add_primitive(Line{q, p});
        } else {
            s.add_primitive(Line{p, q});
        }
    }
    return s;
}

} // namespace cadkit::testing
