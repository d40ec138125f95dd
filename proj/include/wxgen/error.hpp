#pragma once

#include <stdexcept>
#include <string>

namespace wxgen {

// Library errors split by category so the CLI can map them to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration, arguments, shapes, or numeric state. CLI exit code 1.
struct ValidationError : Error {
    using Error::Error;
};

// File or stream problems: missing, truncated, or corrupt data. CLI exit code 2.
struct IoError : Error {
    using Error::Error;
};

}  // namespace wxgen
