#include "varcf/error.hpp"

namespace varcf {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Index: return "index error";
        case ErrorKind::Structure: return "structure error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Usage: return "usage error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::EmptyDataset: return "empty dataset";
        case ErrorKind::EmptyMetric: return "empty metric input";
        case ErrorKind::DegenerateVariance: return "degenerate variance";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::Numeric: return "numeric failure";
    }
    return "error";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Usage:
        case ErrorKind::Structure:
        case ErrorKind::Dimension:
            return 1;
        case ErrorKind::Numeric:
            return 3;
        default:
            return 2;
    }
}

}  // namespace varcf
