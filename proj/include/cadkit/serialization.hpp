#pragma once

#include "cadkit/params.hpp"
#include "cadkit/sketch.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace cadkit {

enum class Format : std::uint8_t { Json, Csv, Markdown, Html };

std::string_view format_name(Format f);
std::optional<Format> parse_format_name(std::string_view name);

struct SerializationConfig {
    Format format = Format::Json;
    Strategy strategy = Strategy::PointBased;
    /// Decimal places; a negative value writes the shortest round-trip form.
    int float_precision = 6;
};

/// Fixed-point with trailing zeros trimmed ("1.5", "2", "-0.25"); negative
/// zero prints as "0". A negative precision gives the shortest representation
/// that parses back to the same double.
std::string format_number(double v, int precision);

/// Deterministic text in the configured format. Throws DegeneratePrimitive
/// for zero-length lines under the implicit strategy.
std::string serialize(const SketchGraph& sketch, const SerializationConfig& cfg = {});

nlohmann::ordered_json to_json(const SketchGraph& sketch, const SerializationConfig& cfg = {});

/// Throws SyntaxError, SchemaError or InvariantViolation.
SketchGraph parse_json(std::string_view text);
SketchGraph from_json(const nlohmann::ordered_json& doc);

/// Lossless on-disk document (overparameterized fields, shortest numbers).
std::string to_document(const SketchGraph& sketch);
SketchGraph load_sketch(const std::filesystem::path& path);
void save_sketch(const std::filesystem::path& path, const SketchGraph& sketch);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace cadkit
