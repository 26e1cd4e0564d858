#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed mesh or radii text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Combinatorial defects: non-manifold edges, dangling vertices, bad weights.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// A face collapsed (triangle inequality failed, angle vanished, tiny denominator).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Hyperbolic radius beyond the overflow cap; the flow is escaping.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (u >= 0 in hyperbolic, p <= 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpflow
