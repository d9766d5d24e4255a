// SPDX-License-Identifier: Apache-2.0
#include "csg/errors.hpp"

namespace csg {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_config: return "invalid config";
        case ErrorKind::shape: return "shape mismatch";
        case ErrorKind::index: return "index out of range";
        case ErrorKind::numeric_input: return "non-finite numeric input";
        case ErrorKind::optimizer: return "optimizer error";
        case ErrorKind::capability: return "capability error";
        case ErrorKind::empty_dataset: return "empty dataset";
        case ErrorKind::unrecognized_format: return "unrecognized format";
        case ErrorKind::truncated: return "truncated payload";
        case ErrorKind::version_mismatch: return "version mismatch";
        case ErrorKind::corrupt: return "corrupt payload";
        case ErrorKind::io: return "i/o error";
    }
    return "unknown";
}

void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace csg
