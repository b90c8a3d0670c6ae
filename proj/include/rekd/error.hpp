#pragma once

#include <stdexcept>
#include <string>

namespace rekd {

enum class ErrorCode {
    invalid_argument,
    shape_mismatch,
    bad_magic,
    truncated,
    io,
    missing_file,
    no_valid_region,
    numeric,
};

/// Stable short name, e.g. "bad-magic".
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code)
    { }

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace rekd
