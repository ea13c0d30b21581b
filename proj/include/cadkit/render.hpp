#pragma once

#include "cadkit/image.hpp"
#include "cadkit/quantize.hpp"
#include "cadkit/sketch.hpp"

#include <string>
#include <vector>

namespace cadkit {

inline constexpr int kDefaultImageSize = 512;

/// Maps sketch coordinates onto a pixel canvas through a square frame. Pixel
/// (col, row) covers [col, col+1) x [row, row+1) with rows counted from the top.
struct PixelFrame {
    Normalization frame;
    int width = kDefaultImageSize;
    int height = kDefaultImageSize;

    double scale() const;
    /// Continuous canvas position (x right, y down).
    Vec2 to_canvas(Vec2 p) const;
    /// Pixel containing the point.
    std::pair<int, int> to_pixel(Vec2 p) const;
};

/// Frame fitted to the padded square bbox of the sketch geometry.
PixelFrame fit_frame(const SketchGraph& sketch, int width = kDefaultImageSize, int height = kDefaultImageSize);

struct Marker {
    PrimitiveId id;
    int x = 0;
    int y = 0;

    friend bool operator==(const Marker&, const Marker&) = default;
};

struct SketchRender {
    RasterImage mask;
    std::vector<Marker> markers;
    PixelFrame frame;
};

/// Rasterizes 1-pixel strokes. Markers are computed only when requested and
/// never touch the mask. Throws EmptySketch.
SketchRender render_sketch(const SketchGraph& sketch, int width = kDefaultImageSize,
                           int height = kDefaultImageSize, bool with_marks = false);
/// Same, in a given frame (e.g. a reference sketch's frame).
SketchRender render_sketch(const SketchGraph& sketch, const PixelFrame& frame, bool with_marks = false);

/// Grayscale image for viewing: strokes of `stroke` pixels and the marker ids
/// drawn as digits.
GrayImage display_image(const SketchRender& render, int stroke = 2);

/// SVG 1.1 document; each primitive is a <path> with a data-primitive-id
/// attribute, markers are <text> nodes. An empty sketch gives an empty canvas.
std::string render_sketch_svg(const SketchGraph& sketch, bool with_marks = true, int width = kDefaultImageSize,
                              int height = kDefaultImageSize);

// Raster primitives shared with the solid and section renderers.
void draw_segment(RasterImage& img, int x0, int y0, int x1, int y1);
void draw_thick_dot(GrayImage& img, int x, int y, int stroke, std::uint8_t value);
void draw_digits(GrayImage& img, const std::string& text, int cx, int cy, std::uint8_t value);

} // namespace cadkit
