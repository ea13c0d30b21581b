#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cadkit {

enum class ErrorCode {
    InvalidPrimitive,
    DanglingReference,
    IncompatibleKind,
    DuplicateConstraint,
    EntireHasNoPoint,
    IncompatibleSubRef,
    DegeneratePrimitive,
    MalformedRecord,
    EmptySketch,
    SyntaxError,
    SchemaError,
    InvariantViolation,
    EmptyMask,
    SizeMismatch,
    OpenProfile,
    InvalidExtrusion,
    EmptyModel,
    DegeneratePlane,
    EmptyMesh,
    UnclosableLoops,
    MeshFormat,
    Io,
    DuplicateTool,
    EmptyDocstring,
    UnknownTool,
    UnboundVariable,
    BadArgument,
    PlannerUnparseable,
    TransportError,
    FixtureExhausted,
    PlannerConfig,
    SessionBusy,
    UnknownSession,
    InvalidAttachment,
    AttachmentTooLarge,
};

std::string_view error_code_name(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cadkit
