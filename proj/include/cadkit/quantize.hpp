#pragma once

#include "cadkit/sketch.hpp"

#include <span>
#include <vector>

namespace cadkit {

inline constexpr int kQuantizationBins = 64;

/// Affine map from sketch coordinates to the unit square: u = (p - origin) / side.
struct Normalization {
    Vec2 origin{0.0, 0.0};
    double side = 1.0;

    /// Square box around `box`, centered on it, widened by `margin` of the
    /// larger extent on every side. A box of zero extent gets side 1.
    static Normalization fit(const Box2& box, double margin = 0.05);
    /// Fits quantization_bounds. Throws EmptySketch when the sketch has no
    /// primitives.
    static Normalization fit(const SketchGraph& sketch, double margin = 0.05);

    Vec2 to_unit(Vec2 p) const { return (p - origin) / side; }
    Vec2 from_unit(Vec2 u) const { return origin + side * u; }

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Geometric bounds widened to the full supporting circle of every arc, so
/// arc centers and radii stay inside the token range.
Box2 quantization_bounds(const SketchGraph& sketch);

enum class TokenKind : std::uint8_t { Coordinate, Length, Angle };

/// Token layout per type: line (x_s, y_s, x_e, y_e), circle (x_c, y_c, r),
/// arc (x_c, y_c, r, theta_s, theta_e), point (x_p, y_p).
std::span<const TokenKind> token_kinds(PrimitiveType t);

struct QuantizedPrimitive {
    PrimitiveId id;
    PrimitiveType type = PrimitiveType::Point;
    bool clockwise = false;
    std::vector<int> tokens;

    friend bool operator==(const QuantizedPrimitive&, const QuantizedPrimitive&) = default;
};

struct QuantizedSketch {
    int bins = kQuantizationBins;
    Normalization normalization;
    std::vector<QuantizedPrimitive> primitives;
    std::vector<Constraint> constraints;
    std::uint32_t next_id = 0;

    friend bool operator==(const QuantizedSketch&, const QuantizedSketch&) = default;
};

/// Bin of a unit-interval value, clamped to [0, bins - 1].
int quantize_unit(double u, int bins = kQuantizationBins);
/// Bin of an angle in radians, wrapping around 2pi.
int quantize_angle(double theta, int bins = kQuantizationBins);
/// Token difference; angle tokens wrap around.
int token_distance(TokenKind kind, int a, int b, int bins = kQuantizationBins);

QuantizedPrimitive quantize_primitive(const SketchGraph::Entry& e, const Normalization& n,
                                      int bins = kQuantizationBins);

/// Fits the normalization to the sketch. Throws EmptySketch.
QuantizedSketch quantize(const SketchGraph& sketch);
/// Quantizes on a given normalization (e.g. the ground truth's).
QuantizedSketch quantize(const SketchGraph& sketch, const Normalization& n);

/// Maps bin centers back through the stored normalization.
SketchGraph dequantize(const QuantizedSketch& q);

} // namespace cadkit
