#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tracena {

// Base error for everything raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file could not be parsed; message carries file/row context.
class ParseError : public Error {
public:
    using Error::Error;
};

// Means rotation cannot proceed (identical group means). Callers may fall
// back to a plain SVD space.
class DegenerateRotationError : public Error {
public:
    using Error::Error;
};

// Failure inside the orchestrated pipeline, tagged with the stage name.
class PipelineError : public Error {
public:
    PipelineError(std::string stage, const std::string& message)
        : Error("[stage " + stage + "] " + message), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace tracena
