#include "cadkit/section.hpp"

#include "cadkit/quantize.hpp"
#include "cadkit/render.hpp"

#define BOOST_GEOMETRY_NO_ROBUSTNESS
#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/multi/geometries/multi_polygon.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace cadkit {

namespace bg = boost::geometry;

namespace {

using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, false, false>;
using BgRegion = bg::model::multi_polygon<BgPolygon>;

constexpr double kAxisTolerance = 1e-9;

BgPolygon to_bg(const std::vector<Vec2>& ring) {
    BgPolygon poly;
    for (const Vec2& p : ring) {
        poly.outer().push_back({p.x, p.y});
    }
    bg::correct(poly);
    return poly;
}

BgRegion even_odd(const std::vector<std::vector<Vec2>>& rings) {
    BgRegion acc;
    for (const auto& ring : rings) {
        if (ring.size() < 3 || std::abs(signed_area(ring)) == 0.0) {
            continue;
        }
        BgRegion next;
        bg::sym_difference(acc, to_bg(ring), next);
        acc = std::move(next);
    }
    return acc;
}

BgRegion union_all(const std::vector<std::vector<Vec2>>& rings) {
    BgRegion acc;
    for (const auto& ring : rings) {
        if (ring.size() < 3 || std::abs(signed_area(ring)) == 0.0) {
            continue;
        }
        BgRegion next;
        bg::union_(acc, to_bg(ring), next);
        acc = std::move(next);
    }
    return acc;
}

std::vector<Vec2> from_bg(const BgPolygon::ring_type& ring) {
    std::vector<Vec2> out;
    for (const auto& p : ring) {
        out.push_back({p.x(), p.y()});
    }
    if (out.size() > 1 && out.front() == out.back()) {
        out.pop_back();
    }
    return out;
}

SectionPolygon to_section(const BgRegion& region) {
    SectionPolygon out;
    for (const auto& poly : region) {
        auto outer = from_bg(poly.outer());
        if (signed_area(outer) < 0) {
            std::reverse(outer.begin(), outer.end());
        }
        if (outer.size() >= 3) {
            out.loops.push_back(std::move(outer));
        }
        for (const auto& inner : poly.inners()) {
            auto hole = from_bg(inner);
            if (signed_area(hole) > 0) {
                std::reverse(hole.begin(), hole.end());
            }
            if (hole.size() >= 3) {
                out.loops.push_back(std::move(hole));
            }
        }
    }
    return out;
}

/// Sketch plane parallel to the section plane: the profile itself.
std::vector<std::vector<Vec2>> parallel_section(const SolidStep& step, const SectionPlane& plane) {
    const PlaneFrame f = sketch_frame(step.op);
    const double h = dot(plane.origin - f.origin, f.ez);
    if (h < -step.op.d_minus || h > step.op.d_plus) {
        return {};
    }
    std::vector<std::vector<Vec2>> rings;
    for (const auto& loop : step.profile.loops) {
        std::vector<Vec2> ring;
        for (const Vec2& q : loop.polygon()) {
            ring.push_back(plane.to_plane(sketch_to_world(step.op, q, h)));
        }
        rings.push_back(std::move(ring));
    }
    return rings;
}

/// Parameters where the line o + t d meets the profile boundary.
std::vector<double> line_profile_hits(const Profile& profile, Vec2 o, Vec2 d) {
    std::vector<double> ts;
    auto circle_hits = [&](Vec2 c, double r, auto&& keep) {
        const Vec2 w = o - c;
        const double b = dot(w, d);
        const double disc = b * b - (dot(w, w) - r * r);
        if (disc < 0) {
            return;
        }
        const double s = std::sqrt(disc);
        for (double t : {-b - s, -b + s}) {
            const Vec2 p = o + t * d;
            if (keep(std::atan2(p.y - c.y, p.x - c.x))) {
                ts.push_back(t);
            }
        }
    };
    for (const auto& loop : profile.loops) {
        for (const auto& e : loop.edges) {
            if (const auto* l = std::get_if<Line>(&e)) {
                const Vec2 s = l->end - l->start;
                const double den = cross(d, s);
                if (std::abs(den) < 1e-300) {
                    continue;
                }
                const Vec2 w = l->start - o;
                const double t = cross(w, s) / den;
                const double u = cross(w, d) / den;
                if (u >= 0.0 && u <= 1.0) {
                    ts.push_back(t);
                }
            } else if (const auto* c = std::get_if<Circle>(&e)) {
                circle_hits(c->center, c->radius, [](double) { return true; });
            } else {
                const auto& a = std::get<Arc>(e);
                circle_hits(a.center, a.radius, [&](double t) { return arc_contains_angle(a, t); });
            }
        }
    }
    std::sort(ts.begin(), ts.end());
    return ts;
}

/// Sketch plane perpendicular to the section plane: chords of the profile
/// swept along the extrusion.
std::vector<std::vector<Vec2>> perpendicular_section(const SolidStep& step, const SectionPlane& plane) {
    const PlaneFrame f = sketch_frame(step.op);
    // Plane equation in sketch coordinates: n2 . (u, v) = c.
    const Vec2 n2{dot(plane.normal, f.ex), dot(plane.normal, f.ey)};
    const double len = norm(n2);
    const Vec2 n = n2 / len;
    const double c = dot(plane.origin - f.origin, plane.normal) / (step.op.sigma * len);
    const Vec2 o = c * n;
    const Vec2 d = perp(n);
    const std::vector<double> hits = line_profile_hits(step.profile, o, d);
    std::vector<std::pair<double, double>> spans;
    for (std::size_t k = 0; k + 1 < hits.size(); ++k) {
        if (hits[k + 1] - hits[k] <= 0.0) {
            continue;
        }
        if (step.profile.contains(o + 0.5 * (hits[k] + hits[k + 1]) * d)) {
            if (!spans.empty() && spans.back().second == hits[k]) {
                spans.back().second = hits[k + 1];
            } else {
                spans.emplace_back(hits[k], hits[k + 1]);
            }
        }
    }
    std::vector<std::vector<Vec2>> rings;
    for (const auto& [t0, t1] : spans) {
        std::vector<Vec2> ring;
        for (auto [t, h] : {std::pair{t0, -step.op.d_minus}, std::pair{t1, -step.op.d_minus},
                            std::pair{t1, step.op.d_plus}, std::pair{t0, step.op.d_plus}}) {
            ring.push_back(plane.to_plane(sketch_to_world(step.op, o + t * d, h)));
        }
        rings.push_back(std::move(ring));
    }
    return rings;
}

/// Marching squares over the step occupancy. Boundary cells of a coarse grid
/// are resampled on the fine grid; crossings are located by bisection.
std::vector<std::vector<Vec2>> contour_section(const SolidStep& step, const SectionPlane& plane,
                                               const SectionOptions& opt) {
    Box2 box;
    for (const Vec3& p : step_box_corners(step)) {
        box.expand(plane.to_plane(p));
    }
    const double pad = 0.01 * std::max({box.width(), box.height(), 1e-9});
    box.expand(box.min - Vec2{pad, pad});
    box.expand(box.max + Vec2{pad, pad});
    const int coarse = std::max(1, opt.coarse_cells);
    const int ratio = std::max(1, opt.fine_cells / coarse);
    const int n = coarse * ratio;
    const double hx = box.width() / n;
    const double hy = box.height() / n;
    auto pos = [&](double i, double j) { return Vec2{box.min.x + i * hx, box.min.y + j * hy}; };
    auto inside = [&](Vec2 q) { return step_occupancy(step, plane.to_world(q)); };

    const int stride = n + 1;
    std::vector<std::uint8_t> node(static_cast<std::size_t>(stride) * stride, 2);
    auto at = [&](int i, int j) -> std::uint8_t& { return node[static_cast<std::size_t>(j) * stride + i]; };
    auto value = [&](int i, int j) {
        auto& v = at(i, j);
        if (v == 2) {
            v = inside(pos(i, j)) ? 1 : 0;
        }
        return v == 1;
    };

    std::vector<std::uint8_t> flagged(static_cast<std::size_t>(coarse) * coarse, 0);
    for (int cj = 0; cj < coarse; ++cj) {
        for (int ci = 0; ci < coarse; ++ci) {
            const bool a = value(ci * ratio, cj * ratio);
            const bool b = value((ci + 1) * ratio, cj * ratio);
            const bool c = value(ci * ratio, (cj + 1) * ratio);
            const bool d = value((ci + 1) * ratio, (cj + 1) * ratio);
            if (a != b || a != c || a != d) {
                for (int dj = -1; dj <= 1; ++dj) {
                    for (int di = -1; di <= 1; ++di) {
                        const int x = ci + di;
                        const int y = cj + dj;
                        if (x >= 0 && y >= 0 && x < coarse && y < coarse) {
                            flagged[static_cast<std::size_t>(y) * coarse + x] = 1;
                        }
                    }
                }
            }
        }
    }
    for (int cj = 0; cj < coarse; ++cj) {
        for (int ci = 0; ci < coarse; ++ci) {
            const bool refine = flagged[static_cast<std::size_t>(cj) * coarse + ci] != 0;
            const bool fill = value(ci * ratio, cj * ratio);
            for (int j = cj * ratio; j <= (cj + 1) * ratio; ++j) {
                for (int i = ci * ratio; i <= (ci + 1) * ratio; ++i) {
                    if (refine) {
                        value(i, j);
                    } else if (at(i, j) == 2) {
                        at(i, j) = fill ? 1 : 0;
                    }
                }
            }
        }
    }

    // Crossing points keyed by grid edge: horizontal edges first, then vertical.
    std::unordered_map<std::int64_t, Vec2> crossing;
    auto edge_point = [&](int i0, int j0, int i1, int j1) -> std::pair<std::int64_t, Vec2> {
        const bool horizontal = j0 == j1;
        const std::int64_t key = (horizontal ? 0 : 1) + 2 * (static_cast<std::int64_t>(std::min(j0, j1)) * stride +
                                                             std::min(i0, i1));
        auto it = crossing.find(key);
        if (it != crossing.end()) {
            return {key, it->second};
        }
        Vec2 in = pos(i0, j0);
        Vec2 out = pos(i1, j1);
        if (!value(i0, j0)) {
            std::swap(in, out);
        }
        for (int k = 0; k < 12; ++k) {
            const Vec2 mid = 0.5 * (in + out);
            (inside(mid) ? in : out) = mid;
        }
        const Vec2 p = 0.5 * (in + out);
        crossing.emplace(key, p);
        return {key, p};
    };

    std::vector<std::pair<std::int64_t, std::int64_t>> segments;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const bool v0 = value(i, j);
            const bool v1 = value(i + 1, j);
            const bool v2 = value(i + 1, j + 1);
            const bool v3 = value(i, j + 1);
            const int mask = v0 | (v1 << 1) | (v2 << 2) | (v3 << 3);
            if (mask == 0 || mask == 15) {
                continue;
            }
            auto e = [&](int k) {
                switch (k) {
                case 0: return edge_point(i, j, i + 1, j).first;
                case 1: return edge_point(i + 1, j, i + 1, j + 1).first;
                case 2: return edge_point(i, j + 1, i + 1, j + 1).first;
                default: return edge_point(i, j, i, j + 1).first;
                }
            };
            auto link = [&](int a, int b) { segments.emplace_back(e(a), e(b)); };
            switch (mask) {
            case 1: case 14: link(3, 0); break;
            case 2: case 13: link(0, 1); break;
            case 3: case 12: link(3, 1); break;
            case 4: case 11: link(1, 2); break;
            case 6: case 9: link(0, 2); break;
            case 7: case 8: link(3, 2); break;
            case 5:
            case 10: {
                const bool center = inside(pos(i + 0.5, j + 0.5));
                // Corners 0 and 2 set in case 5; the center decides whether
                // they are joined.
                if ((mask == 5) == center) {
                    link(3, 2);
                    link(0, 1);
                } else {
                    link(3, 0);
                    link(1, 2);
                }
                break;
            }
            default: break;
            }
        }
    }

    std::unordered_map<std::int64_t, std::vector<std::size_t>> incident;
    for (std::size_t k = 0; k < segments.size(); ++k) {
        incident[segments[k].first].push_back(k);
        incident[segments[k].second].push_back(k);
    }
    std::vector<bool> used(segments.size(), false);
    std::vector<std::vector<Vec2>> rings;
    for (std::size_t seed = 0; seed < segments.size(); ++seed) {
        if (used[seed]) {
            continue;
        }
        used[seed] = true;
        std::vector<Vec2> ring{crossing.at(segments[seed].first)};
        const std::int64_t start = segments[seed].first;
        std::int64_t cur = segments[seed].second;
        while (cur != start) {
            ring.push_back(crossing.at(cur));
            std::size_t next = segments.size();
            for (std::size_t k : incident[cur]) {
                if (!used[k]) {
                    next = k;
                    break;
                }
            }
            if (next == segments.size()) {
                break;
            }
            used[next] = true;
            cur = segments[next].first == cur ? segments[next].second : segments[next].first;
        }
        if (ring.size() >= 3) {
            rings.push_back(std::move(ring));
        }
    }
    return rings;
}

BgRegion step_region(const SolidStep& step, const SectionPlane& plane, const SectionOptions& opt) {
    const double align = std::abs(dot(plane.normal, sketch_frame(step.op).ez));
    if (!opt.force_contour && align > 1.0 - kAxisTolerance) {
        return even_odd(parallel_section(step, plane));
    }
    if (!opt.force_contour && align < kAxisTolerance) {
        return union_all(perpendicular_section(step, plane));
    }
    return even_odd(contour_section(step, plane, opt));
}

std::uint64_t snap_key(std::int64_t x, std::int64_t y, std::int64_t z) {
    return (static_cast<std::uint64_t>(x) * 73856093ull) ^ (static_cast<std::uint64_t>(y) * 19349663ull) ^
           (static_cast<std::uint64_t>(z) * 83492791ull);
}

} // namespace

SectionPlane SectionPlane::make(Vec3 origin, Vec3 normal) {
    const double len = norm(normal);
    if (!(len > 0.0) || !std::isfinite(len) || !std::isfinite(origin.x) || !std::isfinite(origin.y) ||
        !std::isfinite(origin.z)) {
        throw Error(ErrorCode::DegeneratePlane, "section plane needs a finite origin and a nonzero normal");
    }
    const Vec3 n = normal / len;
    const std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
        if (std::abs(dot(axes[k], n)) < std::abs(dot(axes[best], n))) {
            best = k;
        }
    }
    Vec3 x = axes[best] - dot(axes[best], n) * n;
    x = x / norm(x);
    return {origin, n, x, cross(n, x)};
}

Vec2 SectionPlane::to_plane(Vec3 p) const {
    const Vec3 q = p - origin;
    return {dot(q, x_axis), dot(q, y_axis)};
}

Vec3 SectionPlane::to_world(Vec2 q) const {
    return origin + q.x * x_axis + q.y * y_axis;
}

double SectionPlane::signed_distance(Vec3 p) const {
    return dot(p - origin, normal);
}

double signed_area(const std::vector<Vec2>& ring) {
    double a = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        a += cross(ring[i], ring[(i + 1) % ring.size()]);
    }
    return 0.5 * a;
}

bool ring_contains(const std::vector<Vec2>& ring, Vec2 p) {
    bool in = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const Vec2 a = ring[i];
        const Vec2 b = ring[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x)) {
            in = !in;
        }
    }
    return in;
}

double SectionPolygon::area() const {
    double a = 0.0;
    for (const auto& l : loops) {
        a += signed_area(l);
    }
    return a;
}

double SectionPolygon::perimeter() const {
    double s = 0.0;
    for (const auto& l : loops) {
        for (std::size_t i = 0; i < l.size(); ++i) {
            s += distance(l[i], l[(i + 1) % l.size()]);
        }
    }
    return s;
}

bool SectionPolygon::contains(Vec2 p) const {
    bool in = false;
    for (const auto& l : loops) {
        in ^= ring_contains(l, p);
    }
    return in;
}

Box2 SectionPolygon::bounds() const {
    Box2 b;
    for (const auto& l : loops) {
        for (const Vec2& p : l) {
            b.expand(p);
        }
    }
    return b;
}

SectionPolygon cross_section_solid(const SolidModel& model, const SectionPlane& plane, const SectionOptions& options) {
    if (model.empty()) {
        throw Error(ErrorCode::EmptyModel, "solid model has no extrusion");
    }
    BgRegion acc;
    for (const auto& step : model.steps()) {
        const BgRegion region = step_region(step, plane, options);
        BgRegion next;
        switch (step.op.beta) {
        case ExtrudeType::New:
        case ExtrudeType::Join: bg::union_(acc, region, next); break;
        case ExtrudeType::Cut: bg::difference(acc, region, next); break;
        case ExtrudeType::Intersect: bg::intersection(acc, region, next); break;
        }
        acc = std::move(next);
    }
    return to_section(acc);
}

MeshSection cross_section_mesh(const TriangleMesh& mesh, const SectionPlane& plane) {
    if (mesh.empty()) {
        throw Error(ErrorCode::EmptyMesh, "mesh has no triangles");
    }
    const double tol = std::max(1e-6 * mesh.diagonal(), 1e-300);
    std::vector<Vec2> nodes;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
    auto snap = [&](Vec3 p) {
        const auto cx = static_cast<std::int64_t>(std::floor(p.x / tol));
        const auto cy = static_cast<std::int64_t>(std::floor(p.y / tol));
        const auto cz = static_cast<std::int64_t>(std::floor(p.z / tol));
        const Vec2 q = plane.to_plane(p);
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    auto it = grid.find(snap_key(cx + dx, cy + dy, cz + dz));
                    if (it == grid.end()) {
                        continue;
                    }
                    for (std::size_t k : it->second) {
                        if (distance(nodes[k], q) <= tol) {
                            return k;
                        }
                    }
                }
            }
        }
        nodes.push_back(q);
        grid[snap_key(cx, cy, cz)].push_back(nodes.size() - 1);
        return nodes.size() - 1;
    };

    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::map<std::pair<std::size_t, std::size_t>, bool> seen;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto tri = mesh.triangle(t);
        std::array<double, 3> d{};
        for (int k = 0; k < 3; ++k) {
            d[k] = plane.signed_distance(tri[k]);
        }
        std::vector<Vec3> pts;
        for (int k = 0; k < 3; ++k) {
            const int m = (k + 1) % 3;
            // Vertices on the plane count as positive.
            if ((d[k] < 0.0) != (d[m] < 0.0)) {
                const double s = d[k] / (d[k] - d[m]);
                pts.push_back(tri[k] + s * (tri[m] - tri[k]));
            }
        }
        if (pts.size() != 2) {
            continue;
        }
        std::size_t a = snap(pts[0]);
        std::size_t b = snap(pts[1]);
        if (a == b) {
            continue;
        }
        if (seen.emplace(std::minmax(a, b), true).second) {
            segments.emplace_back(a, b);
        }
    }

    std::vector<std::vector<std::size_t>> incident(nodes.size());
    for (std::size_t k = 0; k < segments.size(); ++k) {
        incident[segments[k].first].push_back(k);
        incident[segments[k].second].push_back(k);
    }
    std::vector<bool> used(segments.size(), false);
    auto next_from = [&](std::size_t node) {
        for (std::size_t k : incident[node]) {
            if (!used[k]) {
                return k;
            }
        }
        return segments.size();
    };
    MeshSection out;
    std::vector<std::vector<Vec2>> rings;
    for (std::size_t seed = 0; seed < segments.size(); ++seed) {
        if (used[seed]) {
            continue;
        }
        used[seed] = true;
        std::vector<std::size_t> chain{segments[seed].first, segments[seed].second};
        bool closed = false;
        for (;;) {
            const std::size_t k = next_from(chain.back());
            if (k == segments.size()) {
                break;
            }
            used[k] = true;
            const std::size_t nxt = segments[k].first == chain.back() ? segments[k].second : segments[k].first;
            if (nxt == chain.front()) {
                closed = true;
                break;
            }
            chain.push_back(nxt);
        }
        if (!closed) {
            // Extend backwards from the seed before giving up.
            for (;;) {
                const std::size_t k = next_from(chain.front());
                if (k == segments.size()) {
                    break;
                }
                used[k] = true;
                const std::size_t nxt = segments[k].first == chain.front() ? segments[k].second : segments[k].first;
                if (nxt == chain.back()) {
                    closed = true;
                    break;
                }
                chain.insert(chain.begin(), nxt);
            }
        }
        if (!closed || chain.size() < 3) {
            ++out.open_chains;
            continue;
        }
        std::vector<Vec2> ring;
        for (std::size_t id : chain) {
            ring.push_back(nodes[id]);
        }
        rings.push_back(std::move(ring));
    }
    for (std::size_t i = 0; i < rings.size(); ++i) {
        int depth = 0;
        for (std::size_t j = 0; j < rings.size(); ++j) {
            if (i != j && ring_contains(rings[j], rings[i].front())) {
                ++depth;
            }
        }
        const bool outer = depth % 2 == 0;
        if ((signed_area(rings[i]) > 0) != outer) {
            std::reverse(rings[i].begin(), rings[i].end());
        }
    }
    out.polygon.loops = std::move(rings);
    return out;
}

RasterImage section_image(const SectionPolygon& section, int width, int height) {
    if (width < 16 || height < 16) {
        throw Error(ErrorCode::BadArgument, "image dimensions must be at least 16 pixels");
    }
    RasterImage img(width, height);
    if (section.empty()) {
        return img;
    }
    const PixelFrame frame{Normalization::fit(section.bounds()), width, height};
    for (const auto& loop : section.loops) {
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const auto [x0, y0] = frame.to_pixel(loop[i]);
            const auto [x1, y1] = frame.to_pixel(loop[(i + 1) % loop.size()]);
            draw_segment(img, x0, y0, x1, y1);
        }
    }
    return img;
}

nlohmann::ordered_json section_to_json(const SectionPolygon& section, const SectionPlane& plane) {
    auto v3 = [](Vec3 v) { return nlohmann::ordered_json::array({v.x, v.y, v.z}); };
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["kind"] = "section";
    doc["plane"] = {{"origin", v3(plane.origin)},
                    {"normal", v3(plane.normal)},
                    {"x_axis", v3(plane.x_axis)},
                    {"y_axis", v3(plane.y_axis)}};
    doc["loops"] = nlohmann::ordered_json::array();
    for (const auto& loop : section.loops) {
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (const Vec2& p : loop) {
            pts.push_back({p.x, p.y});
        }
        doc["loops"].push_back({{"role", signed_area(loop) >= 0 ? "outer" : "hole"}, {"points", std::move(pts)}});
    }
    doc["area"] = section.area();
    return doc;
}

} // namespace cadkit
