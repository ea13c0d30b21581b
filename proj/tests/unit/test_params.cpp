#include <doctest.h>

#include "cadkit/params.hpp"
#include "generators.hpp"

#include <cmath>

using namespace cadkit;
using cadkit::testing::Rng;

namespace {

double max_coord_error(const Primitive& a, const Primitive& b) {
    REQUIRE(type_of(a) == type_of(b));
    const ParamRecord ra = param_record(a, Strategy::PointBased);
    const ParamRecord rb = param_record(b, Strategy::PointBased);
    double worst = 0.0;
    for (std::size_t i = 0; i < ra.fields.size(); ++i) {
        worst = std::max(worst, std::abs(ra.fields[i].value - rb.fields[i].value));
    }
    return worst;
}

} // namespace

TEST_SUITE("params") {

TEST_CASE("implicit line uses the midpoint base") {
    const auto rec = std::get<ImplicitLine>(to_implicit(Line{{0, 0}, {2, 0}}));
    CHECK(rec.base == Vec2{1, 0});
    CHECK(rec.direction == Vec2{1, 0});
    CHECK(rec.d_start == -1.0);
    CHECK(rec.d_end == 1.0);
    const auto back = std::get<Line>(from_implicit(rec));
    CHECK(back == Line{{0, 0}, {2, 0}});
}

TEST_CASE("implicit conversion errors") {
    CHECK_THROWS_AS(to_implicit(Line{{5, 5}, {5, 5}}), Error);
    try {
        from_implicit(ImplicitLine{{0, 0}, {0, 0}, -1, 1});
        FAIL("expected MalformedRecord");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedRecord);
    }
    const Circle c{{3, 4}, 2};
    CHECK(std::get<Circle>(to_implicit(c)) == c);
}

TEST_CASE("overparameterized views") {
    const ParamRecord line = overparameterize(Line{{0, 0}, {2, 0}});
    CHECK(line.get("x_s") == 0.0);
    CHECK(line.get("x_e") == 2.0);
    CHECK(line.get("x_p") == 1.0);
    CHECK(line.get("v_x") == 1.0);
    CHECK(line.get("d_s") == -1.0);
    CHECK(line.get("d_e") == 1.0);

    const ParamRecord arc = overparameterize(Arc{{0, 0}, 1, 0.0, kPi, false});
    CHECK(arc.get("x_s") == doctest::Approx(1.0));
    CHECK(arc.get("y_s") == doctest::Approx(0.0));
    CHECK(arc.get("x_m") == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(arc.get("y_m") == doctest::Approx(1.0));
    CHECK(arc.get("x_e") == doctest::Approx(-1.0));
    CHECK(std::abs(arc.get("y_e")) < 1e-12);

    const ParamRecord point = overparameterize(Point{{2, 3}});
    REQUIRE(point.fields.size() == 2);
    CHECK(point.get("x_p") == 2.0);
    CHECK(point.get("y_p") == 3.0);
}

TEST_CASE("field names follow the strategy tables") {
    for (auto t : {PrimitiveType::Line, PrimitiveType::Circle, PrimitiveType::Arc, PrimitiveType::Point}) {
        for (auto s : {Strategy::Implicit, Strategy::PointBased, Strategy::Overparameterized}) {
            Primitive p;
            switch (t) {
            case PrimitiveType::Line: p = Line{{0, 0}, {1, 2}}; break;
            case PrimitiveType::Circle: p = Circle{{0, 0}, 1}; break;
            case PrimitiveType::Arc: p = Arc{{0, 0}, 1, 0.5, 2.0, true}; break;
            case PrimitiveType::Point: p = Point{{1, 1}}; break;
            }
            const ParamRecord rec = param_record(p, s);
            const auto& names = field_names(t, s);
            REQUIRE(rec.fields.size() == names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                CHECK(rec.fields[i].name == names[i]);
            }
        }
    }
}

TEST_CASE("round trips through every strategy on random primitives") {
    Rng rng(5);
    double worst = 0.0;
    double worst_norm = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Primitive p = cadkit::testing::random_primitive(rng);
        for (auto s : {Strategy::Implicit, Strategy::PointBased, Strategy::Overparameterized}) {
            const Primitive back = primitive_from_record(param_record(p, s), s);
            worst = std::max(worst, max_coord_error(p, back));
        }
        worst = std::max(worst, max_coord_error(p, from_implicit(to_implicit(p))));
        worst = std::max(worst, max_coord_error(p, from_overparam(overparameterize(p))));
        if (auto v = overparameterize(p).find("v_x")) {
            const double vy = overparameterize(p).get("v_y");
            worst_norm = std::max(worst_norm, std::abs(std::hypot(*v, vy) - 1.0));
        }
    }
    CHECK(worst < 1e-9);
    CHECK(worst_norm < 1e-9);
}

TEST_CASE("implicit record round trip is identity") {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const Line l = cadkit::testing::random_line(rng);
        const auto rec = std::get<ImplicitLine>(to_implicit(l));
        const auto again = std::get<ImplicitLine>(to_implicit(from_implicit(rec)));
        CHECK(distance(rec.base, again.base) < 1e-9);
        CHECK(distance(rec.direction, again.direction) < 1e-9);
        CHECK(std::abs(rec.d_start - again.d_start) < 1e-9);
        CHECK(std::abs(rec.d_end - again.d_end) < 1e-9);
    }
}

TEST_CASE("point-based arc reconstruction keeps orientation") {
    const Arc cw{{1, 2}, 3, 1.0, 5.0, true};
    const auto back = std::get<Arc>(primitive_from_record(param_record(cw, Strategy::PointBased), Strategy::PointBased));
    CHECK(back.clockwise);
    CHECK(back.radius == doctest::Approx(3.0));
    CHECK(back.theta_start == doctest::Approx(1.0));
    CHECK(back.theta_end == doctest::Approx(5.0));
}

TEST_CASE("collinear point-based arc is malformed") {
    ParamRecord rec = param_record(Arc{{0, 0}, 1, 0.0, kPi, false}, Strategy::PointBased);
    for (auto& f : rec.fields) {
        if (f.name == "y_m") {
            f.value = 0.0;
        }
        if (f.name == "x_m") {
            f.value = 0.0;
        }
    }
    CHECK_THROWS_AS(primitive_from_record(rec, Strategy::PointBased), Error);
}

}
