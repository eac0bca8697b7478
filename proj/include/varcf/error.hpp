#pragma once

#include <stdexcept>
#include <string>

namespace varcf {

enum class ErrorKind {
    Dimension,
    Index,
    Structure,
    Config,
    Usage,
    Parse,
    EmptyDataset,
    EmptyMetric,
    DegenerateVariance,
    Format,
    Io,
    Numeric,
};

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric failure.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace varcf
