#include "cadkit/render.hpp"

#include "cadkit/serialization.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace cadkit {

double PixelFrame::scale() const {
    return std::min(width, height) / frame.side;
}

Vec2 PixelFrame::to_canvas(Vec2 p) const {
    const double s = std::min(width, height);
    const Vec2 u = frame.to_unit(p);
    const double ox = 0.5 * (width - s);
    const double oy = 0.5 * (height - s);
    return {ox + u.x * s, height - (oy + u.y * s)};
}

std::pair<int, int> PixelFrame::to_pixel(Vec2 p) const {
    const Vec2 c = to_canvas(p);
    return {static_cast<int>(std::floor(c.x)), static_cast<int>(std::floor(c.y))};
}

PixelFrame fit_frame(const SketchGraph& sketch, int width, int height) {
    if (sketch.empty()) {
        throw Error(ErrorCode::EmptySketch, "cannot render an empty sketch");
    }
    if (width < 16 || height < 16) {
        throw Error(ErrorCode::BadArgument, "image dimensions must be at least 16 pixels");
    }
    return {Normalization::fit(sketch.bounds()), width, height};
}

void draw_segment(RasterImage& img, int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        img.set(x0, y0);
        if (x0 == x1 && y0 == y1) {
            break;
        }
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

namespace {

/// Canvas pixel centers for a continuous-center circle with the midpoint
/// algorithm; `keep` filters by the math-convention angle of the pixel.
template <typename Keep>
void draw_circle(RasterImage& img, const PixelFrame& f, Vec2 center, double radius, Keep keep) {
    const auto [cx, cy] = f.to_pixel(center);
    const int r = static_cast<int>(std::lround(radius * f.scale()));
    auto plot = [&](int dx, int dy) {
        // Canvas rows grow downwards, so the math angle uses -dy.
        if (keep(std::atan2(static_cast<double>(-dy), static_cast<double>(dx)))) {
            img.set(cx + dx, cy + dy);
        }
    };
    if (r <= 0) {
        plot(0, 0);
        return;
    }
    int x = r;
    int y = 0;
    int d = 1 - r;
    while (x >= y) {
        plot(x, y);
        plot(y, x);
        plot(-y, x);
        plot(-x, y);
        plot(-x, -y);
        plot(-y, -x);
        plot(y, -x);
        plot(x, -y);
        ++y;
        if (d < 0) {
            d += 2 * y + 1;
        } else {
            --x;
            d += 2 * (y - x) + 1;
        }
    }
}

void draw_primitive(RasterImage& img, const PixelFrame& f, const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        const auto [x0, y0] = f.to_pixel(l->start);
        const auto [x1, y1] = f.to_pixel(l->end);
        draw_segment(img, x0, y0, x1, y1);
    } else if (const auto* c = std::get_if<Circle>(&p)) {
        draw_circle(img, f, c->center, c->radius, [](double) { return true; });
    } else if (const auto* a = std::get_if<Arc>(&p)) {
        draw_circle(img, f, a->center, a->radius, [&](double t) { return arc_contains_angle(*a, t); });
        for (double t : {a->theta_start, a->theta_end}) {
            const auto [x, y] = f.to_pixel(arc_point(*a, t));
            img.set(x, y);
        }
    } else {
        const auto [x, y] = f.to_pixel(std::get<Point>(p).position);
        img.set(x, y);
    }
}

/// Anchor point and unit stroke normal (canvas coordinates) of a primitive.
std::pair<Vec2, Vec2> marker_anchor(const PixelFrame& f, const Primitive& p) {
    if (const auto* l = std::get_if<Line>(&p)) {
        const Vec2 a = f.to_canvas(l->start);
        const Vec2 b = f.to_canvas(l->end);
        const Vec2 d = b - a;
        const double n = norm(d);
        return {0.5 * (a + b), n > 0 ? perp(d) / n : Vec2{0, -1}};
    }
    if (const auto* c = std::get_if<Circle>(&p)) {
        return {f.to_canvas(c->center), Vec2{0, 0}};
    }
    if (const auto* a = std::get_if<Arc>(&p)) {
        const double t = arc_mid_angle(*a);
        return {f.to_canvas(arc_point(*a, t)), Vec2{std::cos(t), -std::sin(t)}};
    }
    return {f.to_canvas(std::get<Point>(p).position), Vec2{0, -1}};
}

constexpr double kMarkerNudge = 6.0;
constexpr double kMarkerSpacing = 10.0;

std::vector<Marker> place_markers(const SketchGraph& sketch, const PixelFrame& f, const RasterImage& mask) {
    std::vector<Marker> out;
    auto clamp_x = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, f.width - 1); };
    auto clamp_y = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, f.height - 1); };
    auto collides = [&](int x, int y) {
        for (const auto& m : out) {
            if (std::hypot(m.x - x, m.y - y) < kMarkerSpacing) {
                return true;
            }
        }
        return false;
    };
    for (const auto& e : sketch.primitives()) {
        const auto [anchor, normal] = marker_anchor(f, e.primitive);
        const bool is_circle = std::holds_alternative<Circle>(e.primitive);
        const Vec2 base = anchor + kMarkerNudge * normal;
        int x = clamp_x(base.x);
        int y = clamp_y(base.y);
        if (is_circle) {
            x = clamp_x(anchor.x);
            y = clamp_y(anchor.y);
        }
        if (collides(x, y) || (!is_circle && mask.at(x, y))) {
            bool placed = false;
            for (int ring = 1; ring <= 40 && !placed; ++ring) {
                const double radius = 2.0 * ring;
                const int steps = 8 + 4 * ring;
                for (int k = 0; k < steps && !placed; ++k) {
                    const double t = kTwoPi * k / steps;
                    const int cx = clamp_x(base.x + radius * std::cos(t));
                    const int cy = clamp_y(base.y + radius * std::sin(t));
                    if (!collides(cx, cy) && !mask.at(cx, cy)) {
                        x = cx;
                        y = cy;
                        placed = true;
                    }
                }
            }
        }
        out.push_back({e.id, x, y});
    }
    return out;
}

} // namespace

SketchRender render_sketch(const SketchGraph& sketch, const PixelFrame& frame, bool with_marks) {
    if (sketch.empty()) {
        throw Error(ErrorCode::EmptySketch, "cannot render an empty sketch");
    }
    SketchRender r;
    r.frame = frame;
    r.mask = RasterImage(frame.width, frame.height);
    for (const auto& e : sketch.primitives()) {
        draw_primitive(r.mask, frame, e.primitive);
    }
    if (with_marks) {
        r.markers = place_markers(sketch, frame, r.mask);
    }
    return r;
}

SketchRender render_sketch(const SketchGraph& sketch, int width, int height, bool with_marks) {
    return render_sketch(sketch, fit_frame(sketch, width, height), with_marks);
}

void draw_thick_dot(GrayImage& img, int x, int y, int stroke, std::uint8_t value) {
    for (int dy = 0; dy < stroke; ++dy) {
        for (int dx = 0; dx < stroke; ++dx) {
            const int px = x + dx - stroke / 2;
            const int py = y + dy - stroke / 2;
            if (px >= 0 && py >= 0 && px < img.width && py < img.height) {
                img.at(px, py) = value;
            }
        }
    }
}

namespace {

// 3x5 digit glyphs, one row per 3-bit group, top row first.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

} // namespace

void draw_digits(GrayImage& img, const std::string& text, int cx, int cy, std::uint8_t value) {
    constexpr int kScale = 2;
    const int glyph_w = 3 * kScale;
    const int advance = glyph_w + kScale;
    const int total = static_cast<int>(text.size()) * advance - kScale;
    int x0 = cx - total / 2;
    const int y0 = cy - 5 * kScale / 2;
    for (char ch : text) {
        if (ch >= '0' && ch <= '9') {
            const auto& g = kDigits[static_cast<std::size_t>(ch - '0')];
            for (int row = 0; row < 5; ++row) {
                for (int col = 0; col < 3; ++col) {
                    if (g[static_cast<std::size_t>(row)] & (4 >> col)) {
                        for (int sy = 0; sy < kScale; ++sy) {
                            for (int sx = 0; sx < kScale; ++sx) {
                                const int px = x0 + col * kScale + sx;
                                const int py = y0 + row * kScale + sy;
                                if (px >= 0 && py >= 0 && px < img.width && py < img.height) {
                                    img.at(px, py) = value;
                                }
                            }
                        }
                    }
                }
            }
        }
        x0 += advance;
    }
}

GrayImage display_image(const SketchRender& render, int stroke) {
    GrayImage img(render.mask.width, render.mask.height);
    for (int y = 0; y < render.mask.height; ++y) {
        for (int x = 0; x < render.mask.width; ++x) {
            if (render.mask.at(x, y)) {
                draw_thick_dot(img, x, y, stroke, 0);
            }
        }
    }
    for (const auto& m : render.markers) {
        draw_digits(img, std::to_string(m.id.index), m.x, m.y, 96);
    }
    return img;
}

std::string render_sketch_svg(const SketchGraph& sketch, bool with_marks, int width, int height) {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (sketch.empty()) {
        os << "</svg>\n";
        return os.str();
    }
    const PixelFrame f = fit_frame(sketch, width, height);
    auto num = [](double v) { return format_number(v, 3); };
    auto pt = [&](Vec2 p) {
        const Vec2 c = f.to_canvas(p);
        return num(c.x) + ' ' + num(c.y);
    };
    os << "<g fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" stroke-linecap=\"round\">\n";
    for (const auto& e : sketch.primitives()) {
        std::string d;
        const std::string type(type_name(type_of(e.primitive)));
        if (const auto* l = std::get_if<Line>(&e.primitive)) {
            d = "M " + pt(l->start) + " L " + pt(l->end);
        } else if (const auto* c = std::get_if<Circle>(&e.primitive)) {
            const std::string r = num(c->radius * f.scale());
            d = "M " + pt(c->center + Vec2{c->radius, 0}) + " A " + r + ' ' + r + " 0 1 0 " +
                pt(c->center - Vec2{c->radius, 0}) + " A " + r + ' ' + r + " 0 1 0 " +
                pt(c->center + Vec2{c->radius, 0}) + " Z";
        } else if (const auto* a = std::get_if<Arc>(&e.primitive)) {
            const std::string r = num(a->radius * f.scale());
            const bool large = arc_span(*a) > kPi;
            d = "M " + pt(arc_point(*a, a->theta_start)) + " A " + r + ' ' + r + " 0 " + (large ? "1" : "0") + ' ' +
                (a->clockwise ? "1" : "0") + ' ' + pt(arc_point(*a, a->theta_end));
        } else {
            const Vec2 c = f.to_canvas(std::get<Point>(e.primitive).position);
            d = "M " + num(c.x - 2) + ' ' + num(c.y) + " A 2 2 0 1 0 " + num(c.x + 2) + ' ' + num(c.y) +
                " A 2 2 0 1 0 " + num(c.x - 2) + ' ' + num(c.y) + " Z";
        }
        os << "<path class=\"primitive " << type << "\" data-primitive-id=\"" << e.id.index << "\" d=\"" << d
           << "\"/>\n";
    }
    os << "</g>\n";
    if (with_marks) {
        const SketchRender r = render_sketch(sketch, f, true);
        os << "<g font-family=\"monospace\" font-size=\"11\" fill=\"#1f5fbf\" text-anchor=\"middle\">\n";
        for (const auto& m : r.markers) {
            os << "<text class=\"marker\" data-marker-for=\"" << m.id.index << "\" x=\"" << m.x << "\" y=\""
               << m.y + 4 << "\">" << m.id.index << "</text>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace cadkit
