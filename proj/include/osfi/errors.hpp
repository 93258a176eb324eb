#pragma once

#include <stdexcept>
#include <string>

namespace osfi {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// exit codes: ConfigError -> 2, ProtocolError -> 3, NumericalError -> 4.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Zero-norm vectors, collapsed class means: corrupt embedding data.
struct DegenerateInputError : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct ParseError : ProtocolError {
  ParseError(const std::string& msg, int line_number)
      : ProtocolError(msg + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  int line;
};

}  // namespace osfi
