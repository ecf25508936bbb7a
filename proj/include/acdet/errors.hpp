#pragma once

#include <stdexcept>
#include <string>

namespace acdet {

// Bad or unreadable input data (files, formats, value domains).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Model/config combinations that cannot work together.
struct ModelMismatchError : std::runtime_error {
    explicit ModelMismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace acdet
