// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace avr {

/// Class label of a telemetry sample. Abnormal is the positive class everywhere.
enum class Label : unsigned char { Normal = 0, Abnormal = 1 };

inline const char* to_string(Label l) { return l == Label::Abnormal ? "abnormal" : "normal"; }

/// Base error type for all operational failures in the library.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Precondition or argument violation (maps to a usage error at the CLI).
class invalid_argument : public error {
public:
    explicit invalid_argument(const std::string& what) : error(what) {}
};

}  // namespace avr
