#pragma once

#include <stdexcept>
#include <string>

namespace f2i {

// Error taxonomy mirrored by the CLI exit codes (see tools/main.cpp):
//   UsageError -> 2, DataError -> 3, DivergenceError -> 4, CheckpointError -> 5.

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace f2i
