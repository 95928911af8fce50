#pragma once

#include <stdexcept>
#include <string>

namespace chf {

/// File system failures: missing paths, unreadable or unwritable files.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Structural problems in external inputs: bad CSV headers, unknown config keys.
class SchemaError : public std::runtime_error {
  public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Value-level problems: out-of-range parameters, bad cells, size and shape mismatches.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Failures inside a pipeline stage: solver bracketing, training divergence, numerics.
class RunError : public std::runtime_error {
  public:
    explicit RunError(const std::string& what) : std::runtime_error(what) {}
};

/// Report generation found no completed runs to aggregate.
class MissingRunsError : public std::runtime_error {
  public:
    explicit MissingRunsError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chf
