// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace deepbeam {

// Bad arguments or misuse of an interface. CLI exit code 1.
struct UsageError : std::invalid_argument {
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent on-disk data. CLI exit code 2.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged (non-finite loss). CLI exit code 3.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace deepbeam
