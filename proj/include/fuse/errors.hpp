#pragma once

#include <stdexcept>
#include <string>

namespace fuse {

/// Bad input to an operation (shape mismatch, out-of-range value, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Cholesky failed even at the largest allowed diagonal shift.
class SingularSystemError : public std::runtime_error {
public:
    SingularSystemError(const std::string& what, double final_jitter)
        : std::runtime_error(what), final_jitter_(final_jitter) {}

    [[nodiscard]] double final_jitter() const noexcept { return final_jitter_; }

private:
    double final_jitter_;
};

/// Problems with input data: missing files, missing columns, empty tables.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A feature with zero range cannot be min-max scaled.
class DegenerateFeatureError : public DataError {
public:
    DegenerateFeatureError(const std::string& feature)
        : DataError("feature '" + feature + "' is constant and cannot be scaled"), feature_(feature) {}

    [[nodiscard]] const std::string& feature() const noexcept { return feature_; }

private:
    std::string feature_;
};

/// A persisted model/plan file could not be parsed or has the wrong version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fuse
