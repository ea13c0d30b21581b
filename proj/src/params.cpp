#include "cadkit/params.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace cadkit {

std::string_view strategy_name(Strategy s) {
    switch (s) {
    case Strategy::Implicit: return "implicit";
    case Strategy::PointBased: return "point_based";
    case Strategy::Overparameterized: return "overparameterized";
    }
    return "?";
}

std::optional<Strategy> parse_strategy_name(std::string_view name) {
    for (auto s : {Strategy::Implicit, Strategy::PointBased, Strategy::Overparameterized}) {
        if (strategy_name(s) == name) {
            return s;
        }
    }
    if (name == "pointbased" || name == "point-based") {
        return Strategy::PointBased;
    }
    if (name == "overparam") {
        return Strategy::Overparameterized;
    }
    return std::nullopt;
}

ImplicitRecord to_implicit(const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        const Vec2 d = l->end - l->start;
        const double len = norm(d);
        if (!(len > 0.0)) {
            throw Error(ErrorCode::DegeneratePrimitive, "a zero-length line has no direction");
        }
        return ImplicitLine{0.5 * (l->start + l->end), d / len, -0.5 * len, 0.5 * len};
    }
    if (const auto* a = std::get_if<Arc>(&p)) {
        const Vec2 dir{std::cos(a->theta_start), std::sin(a->theta_start)};
        return ImplicitArc{a->center, dir, a->clockwise, a->theta_start, a->theta_end, a->radius};
    }
    if (const auto* c = std::get_if<Circle>(&p)) {
        return *c;
    }
    return std::get<Point>(p);
}

Primitive from_implicit(const ImplicitRecord& rec) {
    if (const auto* l = std::get_if<ImplicitLine>(&rec)) {
        const double n = norm(l->direction);
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error(ErrorCode::MalformedRecord, "line direction must be a nonzero vector");
        }
        const Vec2 v = l->direction / n;
        return Line{l->base + l->d_start * v, l->base + l->d_end * v};
    }
    if (const auto* a = std::get_if<ImplicitArc>(&rec)) {
        if (!(norm(a->direction) > 0.0)) {
            throw Error(ErrorCode::MalformedRecord, "arc direction must be a nonzero vector");
        }
        if (!(a->radius > 0.0)) {
            throw Error(ErrorCode::MalformedRecord, "arc radius must be positive");
        }
        Arc arc{a->center, a->radius, normalize_angle(a->theta_start), normalize_angle(a->theta_end), a->clockwise};
        return arc;
    }
    if (const auto* c = std::get_if<Circle>(&rec)) {
        return *c;
    }
    return std::get<Point>(rec);
}

std::optional<double> ParamRecord::find(std::string_view name) const {
    for (const auto& f : fields) {
        if (f.name == name) {
            return f.value;
        }
    }
    return std::nullopt;
}

double ParamRecord::get(std::string_view name) const {
    if (auto v = find(name)) {
        return *v;
    }
    throw Error(ErrorCode::MalformedRecord, std::string(type_name(type)) + " record is missing field " +
                                                std::string(name));
}

const std::vector<std::string_view>& field_names(PrimitiveType t, Strategy s) {
    static const std::vector<std::string_view> point{"x_p", "y_p"};
    static const std::vector<std::string_view> circle{"x_c", "y_c", "r"};
    static const std::vector<std::string_view> line_pb{"x_s", "y_s", "x_e", "y_e"};
    static const std::vector<std::string_view> line_im{"x_p", "y_p", "v_x", "v_y", "d_s", "d_e"};
    static const std::vector<std::string_view> line_op{"x_p", "y_p", "v_x", "v_y", "d_s",
                                                       "d_e", "x_s", "y_s", "x_e", "y_e"};
    static const std::vector<std::string_view> arc_pb{"x_s", "y_s", "x_m", "y_m", "x_e", "y_e"};
    static const std::vector<std::string_view> arc_im{"x_c", "y_c", "r", "v_x", "v_y", "b_wc", "theta_s", "theta_e"};
    static const std::vector<std::string_view> arc_op{"x_c", "y_c", "r",   "v_x",  "v_y",     "x_s",    "y_s",
                                                      "x_m", "y_m", "x_e", "y_e", "b_wc", "theta_s", "theta_e"};
    switch (t) {
    case PrimitiveType::Point: return point;
    case PrimitiveType::Circle: return circle;
    case PrimitiveType::Line:
        return s == Strategy::PointBased ? line_pb : (s == Strategy::Implicit ? line_im : line_op);
    case PrimitiveType::Arc:
        return s == Strategy::PointBased ? arc_pb : (s == Strategy::Implicit ? arc_im : arc_op);
    }
    return point;
}

namespace {

struct FieldSink {
    std::vector<ParamField>& out;
    void add(std::string_view n, double v) { out.push_back({n, v, false}); }
    void flag(std::string_view n, bool v) { out.push_back({n, v ? 1.0 : 0.0, true}); }
};

} // namespace

ParamRecord param_record(const Primitive& p, Strategy s, bool lenient) {
    ParamRecord rec;
    rec.type = type_of(p);
    FieldSink sink{rec.fields};

    if (const auto* l = std::get_if<Line>(&p)) {
        if (s != Strategy::PointBased) {
            ImplicitLine im{};
            if (line_length(*l) > 0.0 || !lenient) {
                im = std::get<ImplicitLine>(to_implicit(p));
            } else {
                im = ImplicitLine{l->start, {0.0, 0.0}, 0.0, 0.0};
            }
            sink.add("x_p", im.base.x);
            sink.add("y_p", im.base.y);
            sink.add("v_x", im.direction.x);
            sink.add("v_y", im.direction.y);
            sink.add("d_s", im.d_start);
            sink.add("d_e", im.d_end);
        }
        if (s != Strategy::Implicit) {
            sink.add("x_s", l->start.x);
            sink.add("y_s", l->start.y);
            sink.add("x_e", l->end.x);
            sink.add("y_e", l->end.y);
        }
    } else if (const auto* c = std::get_if<Circle>(&p)) {
        sink.add("x_c", c->center.x);
        sink.add("y_c", c->center.y);
        sink.add("r", c->radius);
    } else if (const auto* a = std::get_if<Arc>(&p)) {
        const Vec2 start = arc_point(*a, a->theta_start);
        const Vec2 mid = arc_point(*a, arc_mid_angle(*a));
        const Vec2 end = arc_point(*a, a->theta_end);
        if (s == Strategy::PointBased) {
            sink.add("x_s", start.x);
            sink.add("y_s", start.y);
            sink.add("x_m", mid.x);
            sink.add("y_m", mid.y);
            sink.add("x_e", end.x);
            sink.add("y_e", end.y);
        } else {
            sink.add("x_c", a->center.x);
            sink.add("y_c", a->center.y);
            sink.add("r", a->radius);
            sink.add("v_x", std::cos(a->theta_start));
            sink.add("v_y", std::sin(a->theta_start));
            if (s == Strategy::Overparameterized) {
                sink.add("x_s", start.x);
                sink.add("y_s", start.y);
                sink.add("x_m", mid.x);
                sink.add("y_m", mid.y);
                sink.add("x_e", end.x);
                sink.add("y_e", end.y);
            }
            sink.flag("b_wc", a->clockwise);
            sink.add("theta_s", a->theta_start);
            sink.add("theta_e", a->theta_end);
        }
    } else {
        const auto& pt = std::get<Point>(p);
        sink.add("x_p", pt.position.x);
        sink.add("y_p", pt.position.y);
    }
    return rec;
}

Vec2 arc_midpoint_on_bisector(Vec2 start, Vec2 mid, Vec2 end) {
    const Vec2 chord = end - start;
    const double len = norm(chord);
    if (!(len > 1e-3 * std::max(distance(start, mid), distance(end, mid)))) {
        return mid;
    }
    const Vec2 n = perp(chord) / len;
    const Vec2 base = 0.5 * (start + end);
    return base + dot(mid - base, n) * n;
}

std::optional<Circle> circle_through(Vec2 a, Vec2 b, Vec2 c) {
    const Vec2 ab = b - a;
    const Vec2 ac = c - a;
    const double d = 2.0 * cross(ab, ac);
    const double scale = std::max({dot(ab, ab), dot(ac, ac), 1e-300});
    if (std::abs(d) <= 1e-14 * scale) {
        return std::nullopt;
    }
    const double ab2 = dot(ab, ab);
    const double ac2 = dot(ac, ac);
    const Vec2 offset{(ac.y * ab2 - ab.y * ac2) / d, (ab.x * ac2 - ac.x * ab2) / d};
    return Circle{a + offset, norm(offset)};
}

std::optional<Arc> arc_through(Vec2 start, Vec2 mid, Vec2 end) {
    auto circ = circle_through(start, arc_midpoint_on_bisector(start, mid, end), end);
    if (!circ) {
        return std::nullopt;
    }
    const bool cw = cross(mid - start, end - mid) < 0.0;
    const double sg = cw ? -1.0 : 1.0;
    const Vec2 ds = start - circ->center;
    const Vec2 de = end - circ->center;
    const double ts0 = std::atan2(ds.y, ds.x);
    const double span0 = normalize_angle(sg * (std::atan2(de.y, de.x) - ts0));

    // Least-squares fit of (x_c, y_c, r, theta_s, span) so the start, angular
    // midpoint and end match the three points.
    Eigen::Matrix<double, 5, 1> x;
    x << circ->center.x, circ->center.y, circ->radius, ts0, span0;
    const Vec2 pts[3] = {start, mid, end};
    auto residuals = [&](const Eigen::Matrix<double, 5, 1>& q, Eigen::Matrix<double, 6, 1>& r,
                         Eigen::Matrix<double, 6, 5>* jac) {
        const double fractions[3] = {0.0, 0.5, 1.0};
        for (int k = 0; k < 3; ++k) {
            const double t = q[3] + sg * fractions[k] * q[4];
            const double c = std::cos(t);
            const double si = std::sin(t);
            r[2 * k] = q[0] + q[2] * c - pts[k].x;
            r[2 * k + 1] = q[1] + q[2] * si - pts[k].y;
            if (jac != nullptr) {
                jac->row(2 * k) << 1.0, 0.0, c, -q[2] * si, -q[2] * si * sg * fractions[k];
                jac->row(2 * k + 1) << 0.0, 1.0, si, q[2] * c, q[2] * c * sg * fractions[k];
            }
        }
    };
    Eigen::Matrix<double, 6, 1> r;
    Eigen::Matrix<double, 6, 5> jac;
    residuals(x, r, &jac);
    double cost = r.squaredNorm();
    for (int it = 0; it < 20 && cost > 0.0; ++it) {
        const Eigen::Matrix<double, 5, 1> step = (jac.transpose() * jac).ldlt().solve(-(jac.transpose() * r));
        const Eigen::Matrix<double, 5, 1> trial = x + step;
        Eigen::Matrix<double, 6, 1> r_try;
        Eigen::Matrix<double, 6, 5> jac_try;
        residuals(trial, r_try, &jac_try);
        const double cost_try = r_try.squaredNorm();
        if (!(cost_try < cost)) {
            break;
        }
        x = trial;
        r = r_try;
        jac = jac_try;
        cost = cost_try;
    }
    if (!(x[2] > 0.0) || !(x[4] > 0.0) || !(x[4] < kTwoPi)) {
        x << circ->center.x, circ->center.y, circ->radius, ts0, span0;
    }
    return Arc{{x[0], x[1]}, x[2], normalize_angle(x[3]), normalize_angle(x[3] + sg * x[4]), cw};
}

Primitive primitive_from_record(const ParamRecord& rec, Strategy s) {
    Primitive out;
    switch (rec.type) {
    case PrimitiveType::Point:
        out = Point{{rec.get("x_p"), rec.get("y_p")}};
        break;
    case PrimitiveType::Circle:
        out = Circle{{rec.get("x_c"), rec.get("y_c")}, rec.get("r")};
        break;
    case PrimitiveType::Line:
        if (s == Strategy::Implicit) {
            out = from_implicit(ImplicitLine{{rec.get("x_p"), rec.get("y_p")},
                                             {rec.get("v_x"), rec.get("v_y")},
                                             rec.get("d_s"),
                                             rec.get("d_e")});
        } else {
            out = Line{{rec.get("x_s"), rec.get("y_s")}, {rec.get("x_e"), rec.get("y_e")}};
        }
        break;
    case PrimitiveType::Arc:
        if (s == Strategy::PointBased) {
            const Vec2 st{rec.get("x_s"), rec.get("y_s")};
            const Vec2 md{rec.get("x_m"), rec.get("y_m")};
            const Vec2 en{rec.get("x_e"), rec.get("y_e")};
            auto arc = arc_through(st, md, en);
            if (!arc) {
                throw Error(ErrorCode::MalformedRecord, "arc start, middle and end points are collinear");
            }
            out = *arc;
        } else {
            out = from_implicit(ImplicitArc{{rec.get("x_c"), rec.get("y_c")},
                                            {rec.get("v_x"), rec.get("v_y")},
                                            rec.get("b_wc") != 0.0,
                                            rec.get("theta_s"),
                                            rec.get("theta_e"),
                                            rec.get("r")});
        }
        break;
    }
    try {
        validate_primitive(out);
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedRecord, e.what());
    }
    return canonicalize(out);
}

OverparamView overparameterize(const Primitive& p) {
    return param_record(p, Strategy::Overparameterized, false);
}

Primitive from_overparam(const OverparamView& view) {
    return primitive_from_record(view, Strategy::Overparameterized);
}

} // namespace cadkit
