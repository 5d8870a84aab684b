#pragma once

#include <stdexcept>
#include <string>

namespace fewrank {

// Malformed or inconsistent input data (files, ids, labels).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated an API precondition.
struct UsageError : std::invalid_argument {
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace fewrank
