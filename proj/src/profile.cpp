#include "cadkit/solid.hpp"

#include <algorithm>
#include <cmath>

namespace cadkit {

namespace {

Vec2 edge_start(const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        return l->start;
    }
    const auto& a = std::get<Arc>(p);
    return arc_point(a, a.theta_start);
}

Vec2 edge_end(const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        return l->end;
    }
    const auto& a = std::get<Arc>(p);
    return arc_point(a, a.theta_end);
}

Primitive reversed(const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        return Line{l->end, l->start};
    }
    const auto& a = std::get<Arc>(p);
    return Arc{a.center, a.radius, a.theta_end, a.theta_start, !a.clockwise};
}

/// Crossings of the ray {p + t (1, 0), t > 0} with a y-monotone piece whose
/// y-range is half open, so shared vertices count once.
int ray_crosses_segment(Vec2 p, Vec2 a, Vec2 b) {
    if ((a.y > p.y) == (b.y > p.y)) {
        return 0;
    }
    const double x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
    return x > p.x ? 1 : 0;
}

/// Crossings with an arc, split at its y extremes into monotone pieces that
/// follow the same half-open rule as segments.
int ray_crosses_arc(Vec2 p, const Arc& a) {
    const double lo = a.clockwise ? a.theta_end : a.theta_start;
    const double hi = lo + arc_span(a);
    std::vector<double> cuts{lo};
    for (double k = std::ceil((lo - kPi / 2) / kPi); kPi / 2 + k * kPi < hi; k += 1.0) {
        const double c = kPi / 2 + k * kPi;
        if (c > lo) {
            cuts.push_back(c);
        }
    }
    cuts.push_back(hi);
    int n = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const Vec2 p0 = arc_point(a, cuts[i]);
        const Vec2 p1 = arc_point(a, cuts[i + 1]);
        if ((p0.y > p.y) == (p1.y > p.y)) {
            continue;
        }
        const double dy = p.y - a.center.y;
        const double dx = std::sqrt(std::max(0.0, a.radius * a.radius - dy * dy));
        const double side = std::cos(0.5 * (cuts[i] + cuts[i + 1])) > 0.0 ? 1.0 : -1.0;
        n += a.center.x + side * dx > p.x ? 1 : 0;
    }
    return n;
}

} // namespace

std::vector<Vec2> ProfileLoop::polygon(int segments_per_turn) const {
    std::vector<Vec2> out;
    for (const auto& e : edges) {
        if (const auto* l = std::get_if<Line>(&e)) {
            out.push_back(l->start);
        } else if (const auto* c = std::get_if<Circle>(&e)) {
            for (int k = 0; k < segments_per_turn; ++k) {
                const double t = kTwoPi * k / segments_per_turn;
                out.push_back(c->center + c->radius * Vec2{std::cos(t), std::sin(t)});
            }
        } else {
            const auto& a = std::get<Arc>(e);
            const double span = arc_span(a);
            const int n = std::max(2, static_cast<int>(std::ceil(span / kTwoPi * segments_per_turn)));
            const double dir = a.clockwise ? -1.0 : 1.0;
            for (int k = 0; k < n; ++k) {
                out.push_back(arc_point(a, a.theta_start + dir * span * k / n));
            }
        }
    }
    return out;
}

std::vector<Vec2> ProfileLoop::vertices() const {
    std::vector<Vec2> out;
    for (const auto& e : edges) {
        if (!std::holds_alternative<Circle>(e)) {
            out.push_back(edge_start(e));
        }
    }
    return out;
}

bool Profile::contains(Vec2 p) const {
    int crossings = 0;
    for (const auto& loop : loops) {
        for (const auto& e : loop.edges) {
            if (const auto* l = std::get_if<Line>(&e)) {
                crossings += ray_crosses_segment(p, l->start, l->end);
            } else if (const auto* c = std::get_if<Circle>(&e)) {
                const double dy = p.y - c->center.y;
                if (std::abs(dy) < c->radius) {
                    const double dx = std::sqrt(c->radius * c->radius - dy * dy);
                    crossings += (c->center.x + dx > p.x) + (c->center.x - dx > p.x);
                }
            } else {
                crossings += ray_crosses_arc(p, std::get<Arc>(e));
            }
        }
    }
    return crossings % 2 == 1;
}

Box2 Profile::bounds() const {
    Box2 box;
    for (const auto& loop : loops) {
        for (const auto& e : loop.edges) {
            const Box2 b = primitive_bounds(e);
            box.expand(b.min);
            box.expand(b.max);
        }
    }
    return box;
}

Profile extract_profile(const SketchGraph& sketch, double tolerance) {
    Profile profile;
    std::vector<Primitive> open;
    for (const auto& e : sketch.primitives()) {
        if (std::holds_alternative<Circle>(e.primitive)) {
            profile.loops.push_back({{e.primitive}});
        } else if (!std::holds_alternative<Point>(e.primitive)) {
            open.push_back(e.primitive);
        }
    }
    std::vector<bool> used(open.size(), false);
    for (std::size_t seed = 0; seed < open.size(); ++seed) {
        if (used[seed]) {
            continue;
        }
        used[seed] = true;
        ProfileLoop loop;
        loop.edges.push_back(open[seed]);
        const Vec2 start = edge_start(open[seed]);
        Vec2 tip = edge_end(open[seed]);
        while (distance(tip, start) > tolerance) {
            // Nearest unused edge touching the tip, in either direction.
            std::size_t best = open.size();
            bool flip = false;
            double best_d = tolerance;
            for (std::size_t k = 0; k < open.size(); ++k) {
                if (used[k]) {
                    continue;
                }
                const double ds = distance(edge_start(open[k]), tip);
                const double de = distance(edge_end(open[k]), tip);
                if (ds <= best_d) {
                    best = k;
                    flip = false;
                    best_d = ds;
                }
                if (de < best_d) {
                    best = k;
                    flip = true;
                    best_d = de;
                }
            }
            if (best == open.size()) {
                throw Error(ErrorCode::OpenProfile, "sketch primitives do not chain into closed loops (open end at " +
                                                        std::to_string(tip.x) + ", " + std::to_string(tip.y) + ")");
            }
            used[best] = true;
            const Primitive next = flip ? reversed(open[best]) : open[best];
            loop.edges.push_back(next);
            tip = edge_end(next);
        }
        profile.loops.push_back(std::move(loop));
    }
    if (profile.loops.empty()) {
        throw Error(ErrorCode::OpenProfile, "sketch has no closed profile loop");
    }
    return profile;
}

} // namespace cadkit
