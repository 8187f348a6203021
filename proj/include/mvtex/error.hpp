#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvtex {

enum class ErrorCode {
  parse,
  missing_uv,
  degenerate_mesh,
  resolution_mismatch,
  shape_mismatch,
  parameter_domain,
  all_masked_row,
  out_of_range,
  empty_input,
  io,
  transport,
  protocol,
  backend,
  config,
  manifest_mismatch,
};

inline std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::missing_uv: return "missing-uv";
    case ErrorCode::degenerate_mesh: return "degenerate-mesh";
    case ErrorCode::resolution_mismatch: return "resolution-mismatch";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::parameter_domain: return "parameter-domain";
    case ErrorCode::all_masked_row: return "all-masked-row";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::io: return "io";
    case ErrorCode::transport: return "transport";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::backend: return "backend";
    case ErrorCode::config: return "config";
    case ErrorCode::manifest_mismatch: return "manifest-mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Parse failure carrying the 1-based source line.
class ParseError : public Error {
public:
  ParseError(ErrorCode code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message), line_(line)
  {
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
  throw Error(code, message);
}

inline void require(bool cond, ErrorCode code, const std::string& message)
{
  if (!cond) {
    throw Error(code, message);
  }
}

}  // namespace mvtex
