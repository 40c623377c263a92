#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace signmap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Input violates a documented contract (bad values, broken references,
// malformed files). The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

// File system failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace signmap
