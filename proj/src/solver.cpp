#include "cadkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cadkit {

namespace {

struct Term {
    int index;
    Vec2 d;
};

/// A 2D quantity with its sparse derivative with respect to the parameters.
struct VecFn {
    Vec2 v;
    std::vector<Term> terms;
};

struct SlotView {
    PrimitiveType type;
    int o;
    bool clockwise;
};

Vec2 at2(const Eigen::VectorXd& x, int i) {
    return {x[i], x[i + 1]};
}

VecFn point_fn(const SlotView& s, SubRef sub, const Eigen::VectorXd& x) {
    const int o = s.o;
    switch (s.type) {
    case PrimitiveType::Line:
        if (sub == SubRef::Start) {
            return {at2(x, o), {{o, {1, 0}}, {o + 1, {0, 1}}}};
        }
        if (sub == SubRef::End) {
            return {at2(x, o + 2), {{o + 2, {1, 0}}, {o + 3, {0, 1}}}};
        }
        return {0.5 * (at2(x, o) + at2(x, o + 2)),
                {{o, {0.5, 0}}, {o + 1, {0, 0.5}}, {o + 2, {0.5, 0}}, {o + 3, {0, 0.5}}}};
    case PrimitiveType::Circle:
    case PrimitiveType::Point:
        return {at2(x, o), {{o, {1, 0}}, {o + 1, {0, 1}}}};
    case PrimitiveType::Arc: {
        const Vec2 c = at2(x, o);
        const double r = x[o + 2];
        const double ts = x[o + 3];
        const double te = x[o + 4];
        double t = ts;
        std::vector<std::pair<int, double>> dt;
        if (sub == SubRef::Start) {
            dt = {{o + 3, 1.0}};
        } else if (sub == SubRef::End) {
            t = te;
            dt = {{o + 4, 1.0}};
        } else {
            const double span = normalize_angle(s.clockwise ? ts - te : te - ts);
            t = s.clockwise ? ts - 0.5 * span : ts + 0.5 * span;
            dt = {{o + 3, 0.5}, {o + 4, 0.5}};
        }
        const Vec2 radial{std::cos(t), std::sin(t)};
        const Vec2 tangent{-radial.y, radial.x};
        VecFn f{c + r * radial, {{o, {1, 0}}, {o + 1, {0, 1}}, {o + 2, radial}}};
        for (auto [k, w] : dt) {
            f.terms.push_back({k, (w * r) * tangent});
        }
        return f;
    }
    }
    return {};
}

VecFn line_direction(const SlotView& s, const Eigen::VectorXd& x) {
    const int o = s.o;
    return {at2(x, o + 2) - at2(x, o), {{o, {-1, 0}}, {o + 1, {0, -1}}, {o + 2, {1, 0}}, {o + 3, {0, 1}}}};
}

Vec2 center_of(const SlotView& s, const Eigen::VectorXd& x) {
    return at2(x, s.o);
}

double radius_of(const SlotView& s, const Eigen::VectorXd& x) {
    return x[s.o + 2];
}

double safe_sq(Vec2 a) {
    return std::max(dot(a, a), 1e-300);
}

/// Signed angle turning a onto b.
double angle_between(Vec2 a, Vec2 b) {
    return std::atan2(cross(a, b), dot(a, b));
}

void add(Eigen::MatrixXd* jac, std::size_t row, int col, double v) {
    if (jac != nullptr) {
        (*jac)(static_cast<Eigen::Index>(row), col) += v;
    }
}

bool is_round(PrimitiveType t) {
    return t == PrimitiveType::Circle || t == PrimitiveType::Arc;
}

int parameter_width(PrimitiveType t) {
    switch (t) {
    case PrimitiveType::Line: return 4;
    case PrimitiveType::Circle: return 3;
    case PrimitiveType::Arc: return 5;
    case PrimitiveType::Point: return 2;
    }
    return 0;
}

int residual_width(ConstraintKind k) {
    return k == ConstraintKind::Coincident ? 2 : 1;
}

} // namespace

ConstraintSystem::ConstraintSystem(const SketchGraph& sketch) : sketch_(sketch) {
    int offset = 0;
    for (const auto& e : sketch_.primitives()) {
        const PrimitiveType t = type_of(e.primitive);
        bool cw = false;
        if (const auto* a = std::get_if<Arc>(&e.primitive)) {
            cw = a->clockwise;
        }
        slots_.push_back({t, offset, cw});
        offset += parameter_width(t);
    }
    x0_.resize(offset);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const int o = slots_[i].offset;
        std::visit(
            [&](const auto& g) {
                using T = std::decay_t<decltype(g)>;
                if constexpr (std::is_same_v<T, Line>) {
                    x0_.segment(o, 4) << g.start.x, g.start.y, g.end.x, g.end.y;
                } else if constexpr (std::is_same_v<T, Circle>) {
                    x0_.segment(o, 3) << g.center.x, g.center.y, g.radius;
                } else if constexpr (std::is_same_v<T, Arc>) {
                    x0_.segment(o, 5) << g.center.x, g.center.y, g.radius, g.theta_start, g.theta_end;
                } else {
                    x0_.segment(o, 2) << g.position.x, g.position.y;
                }
            },
            sketch_.primitives()[i].primitive);
    }
    for (const auto& c : sketch_.constraints()) {
        constraint_slot_i_.push_back(static_cast<int>(sketch_.index_of(c.first.id).value()));
        constraint_slot_j_.push_back(static_cast<int>(sketch_.index_of(c.second.id).value()));
        row_offset_.push_back(rows_);
        rows_ += static_cast<std::size_t>(residual_width(c.kind));
    }
    for (std::size_t ci = 0; ci < sketch_.constraints().size(); ++ci) {
        frozen_.push_back(choose_frozen(ci, x0_));
    }
}

std::pair<std::size_t, std::size_t> ConstraintSystem::rows_of(std::size_t constraint_index) const {
    const std::size_t first = row_offset_.at(constraint_index);
    return {first, first + static_cast<std::size_t>(residual_width(sketch_.constraints()[constraint_index].kind))};
}

std::int8_t ConstraintSystem::choose_frozen(std::size_t ci, const Eigen::VectorXd& x) const {
    const Constraint& c = sketch_.constraints()[ci];
    const Slot& si = slots_[static_cast<std::size_t>(constraint_slot_i_[ci])];
    const Slot& sj = slots_[static_cast<std::size_t>(constraint_slot_j_[ci])];
    const SlotView a{si.type, si.offset, si.clockwise};
    const SlotView b{sj.type, sj.offset, sj.clockwise};
    switch (c.kind) {
    case ConstraintKind::Horizontal:
        return line_direction(a, x).v.x >= 0.0 ? 1 : -1;
    case ConstraintKind::Vertical:
        return line_direction(a, x).v.y >= 0.0 ? 1 : -1;
    case ConstraintKind::Parallel:
        return dot(line_direction(a, x).v, line_direction(b, x).v) >= 0.0 ? 1 : -1;
    case ConstraintKind::Perpendicular:
        return dot(line_direction(a, x).v, perp(line_direction(b, x).v)) >= 0.0 ? 1 : -1;
    case ConstraintKind::Tangent: {
        if (is_round(a.type) && is_round(b.type)) {
            const double d = distance(center_of(a, x), center_of(b, x));
            const double ra = radius_of(a, x);
            const double rb = radius_of(b, x);
            const double external = std::abs(d - (ra + rb));
            const double internal = std::abs(d - std::abs(ra - rb));
            return external <= internal ? 0 : 1;
        }
        const SlotView& line = a.type == PrimitiveType::Line ? a : b;
        const SlotView& round = a.type == PrimitiveType::Line ? b : a;
        const VecFn dir = line_direction(line, x);
        const double q = cross(dir.v, center_of(round, x) - at2(x, line.o));
        return q >= 0.0 ? 1 : -1;
    }
    default:
        return 0;
    }
}

void ConstraintSystem::eval_constraint(std::size_t ci, const Eigen::VectorXd& x, Eigen::VectorXd& res,
                                       Eigen::MatrixXd* jac, std::int8_t frozen) const {
    const Constraint& c = sketch_.constraints()[ci];
    const Slot& si = slots_[static_cast<std::size_t>(constraint_slot_i_[ci])];
    const Slot& sj = slots_[static_cast<std::size_t>(constraint_slot_j_[ci])];
    const SlotView a{si.type, si.offset, si.clockwise};
    const SlotView b{sj.type, sj.offset, sj.clockwise};
    const std::size_t row = row_offset_[ci];
    const auto R = static_cast<Eigen::Index>(row);

    switch (c.kind) {
    case ConstraintKind::Coincident: {
        const VecFn pi = point_fn(a, c.first.sub, x);
        const VecFn pj = point_fn(b, c.second.sub, x);
        res[R] = pi.v.x - pj.v.x;
        res[R + 1] = pi.v.y - pj.v.y;
        for (const auto& t : pi.terms) {
            add(jac, row, t.index, t.d.x);
            add(jac, row + 1, t.index, t.d.y);
        }
        for (const auto& t : pj.terms) {
            add(jac, row, t.index, -t.d.x);
            add(jac, row + 1, t.index, -t.d.y);
        }
        return;
    }
    case ConstraintKind::Horizontal:
    case ConstraintKind::Vertical: {
        const VecFn d = line_direction(a, x);
        const Vec2 target = c.kind == ConstraintKind::Horizontal ? Vec2{static_cast<double>(frozen), 0.0}
                                                                 : Vec2{0.0, static_cast<double>(frozen)};
        res[R] = angle_between(d.v, target);
        const Vec2 grad = Vec2{d.v.y, -d.v.x} / safe_sq(d.v);
        for (const auto& t : d.terms) {
            add(jac, row, t.index, dot(grad, t.d));
        }
        return;
    }
    case ConstraintKind::Parallel:
    case ConstraintKind::Perpendicular: {
        const VecFn di = line_direction(a, x);
        const VecFn dj = line_direction(b, x);
        const bool perpendicular = c.kind == ConstraintKind::Perpendicular;
        const double s = frozen;
        const Vec2 target = perpendicular ? s * perp(dj.v) : s * dj.v;
        res[R] = angle_between(di.v, target);
        const Vec2 grad_a = Vec2{di.v.y, -di.v.x} / safe_sq(di.v);
        const Vec2 grad_b = Vec2{-target.y, target.x} / safe_sq(target);
        for (const auto& t : di.terms) {
            add(jac, row, t.index, dot(grad_a, t.d));
        }
        for (const auto& t : dj.terms) {
            const Vec2 db = perpendicular ? s * perp(t.d) : s * t.d;
            add(jac, row, t.index, dot(grad_b, db));
        }
        return;
    }
    case ConstraintKind::Equal: {
        if (a.type == PrimitiveType::Line) {
            const VecFn di = line_direction(a, x);
            const VecFn dj = line_direction(b, x);
            const double li = std::sqrt(safe_sq(di.v));
            const double lj = std::sqrt(safe_sq(dj.v));
            res[R] = norm(di.v) - norm(dj.v);
            for (const auto& t : di.terms) {
                add(jac, row, t.index, dot(di.v, t.d) / li);
            }
            for (const auto& t : dj.terms) {
                add(jac, row, t.index, -dot(dj.v, t.d) / lj);
            }
        } else {
            res[R] = radius_of(a, x) - radius_of(b, x);
            add(jac, row, a.o + 2, 1.0);
            add(jac, row, b.o + 2, -1.0);
        }
        return;
    }
    case ConstraintKind::Tangent: {
        if (is_round(a.type) && is_round(b.type)) {
            const Vec2 delta = center_of(a, x) - center_of(b, x);
            const double d = norm(delta);
            const Vec2 u = d > 0.0 ? delta / d : Vec2{0.0, 0.0};
            const double ra = radius_of(a, x);
            const double rb = radius_of(b, x);
            add(jac, row, a.o, u.x);
            add(jac, row, a.o + 1, u.y);
            add(jac, row, b.o, -u.x);
            add(jac, row, b.o + 1, -u.y);
            if (frozen == 0) {
                res[R] = d - (ra + rb);
                add(jac, row, a.o + 2, -1.0);
                add(jac, row, b.o + 2, -1.0);
            } else {
                const double sg = ra - rb >= 0.0 ? 1.0 : -1.0;
                res[R] = d - std::abs(ra - rb);
                add(jac, row, a.o + 2, -sg);
                add(jac, row, b.o + 2, sg);
            }
            return;
        }
        const SlotView& line = a.type == PrimitiveType::Line ? a : b;
        const SlotView& round = a.type == PrimitiveType::Line ? b : a;
        const VecFn d = line_direction(line, x);
        const double len2 = safe_sq(d.v);
        const double len = std::sqrt(len2);
        const Vec2 w = center_of(round, x) - at2(x, line.o);
        const double q = cross(d.v, w);
        const double s = frozen;
        // signed distance = q / len, residual = s * q / len - r
        res[R] = s * q / len - radius_of(round, x);
        // d(q/len)/dd = (perp-ish) : d q / dd = (w.y, -w.x); d len / dd = d / len
        const Vec2 dq_dd{w.y, -w.x};
        const Vec2 g_dir = (dq_dd * len - q * d.v / len) / len2;
        for (const auto& t : d.terms) {
            add(jac, row, t.index, s * dot(g_dir, t.d));
        }
        // d q / dw = (-d.y, d.x); w = center - start
        const Vec2 g_w = Vec2{-d.v.y, d.v.x} / len;
        add(jac, row, round.o, s * g_w.x);
        add(jac, row, round.o + 1, s * g_w.y);
        add(jac, row, line.o, -s * g_w.x);
        add(jac, row, line.o + 1, -s * g_w.y);
        add(jac, row, round.o + 2, -1.0);
        return;
    }
    }
}

void ConstraintSystem::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& residuals,
                                Eigen::MatrixXd* jacobian) const {
    residuals.setZero(static_cast<Eigen::Index>(rows_));
    if (jacobian != nullptr) {
        jacobian->setZero(static_cast<Eigen::Index>(rows_), x.size());
    }
    for (std::size_t ci = 0; ci < sketch_.constraints().size(); ++ci) {
        eval_constraint(ci, x, residuals, jacobian, frozen_[ci]);
    }
}

SketchGraph ConstraintSystem::apply(const Eigen::VectorXd& x) const {
    SketchGraph out = sketch_;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const Slot& s = slots_[i];
        const int o = s.offset;
        const PrimitiveId id = sketch_.primitives()[i].id;
        switch (s.type) {
        case PrimitiveType::Line:
            out.set_primitive(id, Line{{x[o], x[o + 1]}, {x[o + 2], x[o + 3]}});
            break;
        case PrimitiveType::Circle:
            out.set_primitive(id, Circle{{x[o], x[o + 1]}, std::abs(x[o + 2])});
            break;
        case PrimitiveType::Arc: {
            double r = x[o + 2];
            double ts = x[o + 3];
            double te = x[o + 4];
            if (r < 0.0) {
                r = -r;
                ts += kPi;
                te += kPi;
            }
            out.set_primitive(id, Arc{{x[o], x[o + 1]}, r, normalize_angle(ts), normalize_angle(te), s.clockwise});
            break;
        }
        case PrimitiveType::Point:
            out.set_primitive(id, Point{{x[o], x[o + 1]}});
            break;
        }
    }
    return out;
}

std::vector<double> residual(const SketchGraph& sketch, const Constraint& c) {
    check_constraint_admissible(sketch, c);
    SketchGraph single = sketch;
    single.clear_constraints();
    single.append_constraint_unchecked_duplicates(c);
    ConstraintSystem system(single);
    Eigen::VectorXd r;
    system.evaluate(system.initial_parameters(), r, nullptr);
    return {r.data(), r.data() + r.size()};
}

double max_displacement(const SketchGraph& before, const SketchGraph& after) {
    double worst = 0.0;
    auto track = [&worst](Vec2 p, Vec2 q) { worst = std::max(worst, distance(p, q)); };
    for (const auto& e : before.primitives()) {
        const Primitive* other = after.find(e.id);
        if (other == nullptr || type_of(*other) != type_of(e.primitive)) {
            return std::numeric_limits<double>::infinity();
        }
        switch (type_of(e.primitive)) {
        case PrimitiveType::Line:
        case PrimitiveType::Arc:
            for (auto sub : {SubRef::Start, SubRef::Mid, SubRef::End}) {
                track(subref_point(e.primitive, sub), subref_point(*other, sub));
            }
            if (const auto* a = std::get_if<Arc>(&e.primitive)) {
                track(a->center, std::get<Arc>(*other).center);
            }
            break;
        case PrimitiveType::Circle: {
            const auto& c0 = std::get<Circle>(e.primitive);
            const auto& c1 = std::get<Circle>(*other);
            track(c0.center, c1.center);
            worst = std::max(worst, std::abs(c0.radius - c1.radius));
            break;
        }
        case PrimitiveType::Point:
            track(std::get<Point>(e.primitive).position, std::get<Point>(*other).position);
            break;
        }
    }
    return worst;
}

bool has_degenerate_primitive(const SketchGraph& sketch, double eps) {
    for (const auto& e : sketch.primitives()) {
        if (const auto* l = std::get_if<Line>(&e.primitive)) {
            if (line_length(*l) < eps) {
                return true;
            }
        } else if (const auto* c = std::get_if<Circle>(&e.primitive)) {
            if (c->radius < eps) {
                return true;
            }
        } else if (const auto* a = std::get_if<Arc>(&e.primitive)) {
            if (a->radius < eps) {
                return true;
            }
        }
    }
    return false;
}

double tolerance_scale(const SketchGraph& sketch) {
    const double diag = sketch.bounds().diagonal();
    return diag > 0.0 ? diag : 1.0;
}

SolveResult solve(const SketchGraph& sketch, const SolveOptions& options) {
    ConstraintSystem system(sketch);
    SolveResult result;
    const Eigen::Index n = static_cast<Eigen::Index>(system.parameter_count());

    Eigen::VectorXd x = system.initial_parameters();
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    system.evaluate(x, r, &jac);
    double cost = r.squaredNorm();

    if (system.residual_count() == 0) {
        result.solved = sketch;
        result.converged = true;
        return result;
    }

    double damping = 1e-3;
    Eigen::VectorXd r_try;
    Eigen::MatrixXd jac_try;
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    int iterations = 0;
    while (iterations < options.max_iterations && std::sqrt(cost) > options.residual_tolerance) {
        ++iterations;
        const double anchor = options.anchor_weight * std::min(1.0, std::sqrt(cost));
        const Eigen::MatrixXd normal = jac.transpose() * jac + (damping + anchor) * identity;
        const Eigen::VectorXd step = normal.ldlt().solve(-(jac.transpose() * r));
        const Eigen::VectorXd x_try = x + step;
        system.evaluate(x_try, r_try, &jac_try);
        const double cost_try = r_try.squaredNorm();
        if (std::isfinite(cost_try) && cost_try < cost) {
            x = x_try;
            r.swap(r_try);
            jac.swap(jac_try);
            cost = cost_try;
            damping = std::max(damping * 0.2, 1e-15);
        } else {
            damping *= 10.0;
            if (damping > 1e12) {
                break;
            }
        }
    }

    result.iterations = iterations;
    result.residual_norm = std::sqrt(cost);
    result.converged = result.residual_norm <= options.residual_tolerance;
    result.solved = iterations == 0 ? sketch : system.apply(x);
    result.max_displacement = max_displacement(sketch, result.solved);
    return result;
}

ConstraintReport check_constraint(const SketchGraph& sketch, const Constraint& c, const CheckerOptions& options) {
    check_constraint_admissible(sketch, c);
    ConstraintReport report;
    const std::vector<double> before = residual(sketch, c);
    double sq = 0.0;
    for (double v : before) {
        sq += v * v;
    }
    report.residual_before = std::sqrt(sq);

    SketchGraph augmented = sketch;
    const bool present = std::any_of(sketch.constraints().begin(), sketch.constraints().end(),
                                     [&c](const Constraint& e) { return same_constraint(e, c); });
    if (!present) {
        augmented.append_constraint_unchecked_duplicates(c);
    }
    const SolveResult solved = solve(augmented, options.solve);
    const double scale = tolerance_scale(sketch);

    report.converged = solved.converged;
    report.residual_after = solved.residual_norm;
    report.max_displacement = solved.max_displacement;
    report.degenerate = has_degenerate_primitive(solved.solved, options.degenerate_relative * scale);
    report.valid = solved.converged && report.residual_after <= options.validity_tolerance && !report.degenerate;
    report.causes_movement = solved.max_displacement > options.movement_relative * scale;
    return report;
}

} // namespace cadkit
