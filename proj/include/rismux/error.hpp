#pragma once

#include <stdexcept>
#include <string>

namespace rismux {

// All library failures surface as Error with a message that names the
// operation and the offending quantity (pivot index, byte offset, key, ...).
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rismux
