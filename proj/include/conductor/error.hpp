#pragma once

#include <stdexcept>
#include <string>

namespace conductor {

/// Raised for invalid input data, documents and commands. The message names
/// the offending field.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace conductor
