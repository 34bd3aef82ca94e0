#pragma once

#include <stdexcept>
#include <string>

namespace tined {

/// Exit codes used by the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitData = 3,
    kExitTraining = 4,
    kExitInternal = 5,
};

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return kExitInternal; }
};

/// Dimension or layout mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// non-positive value, division by a tiny denominator, zeta out of range...).
struct DomainError : Error {
    using Error::Error;
};

/// Numerically rank-deficient system in a solver that requires full rank.
struct RankError : Error {
    explicit RankError(const std::string& msg, std::size_t estimated_rank)
        : Error(msg), estimated_rank(estimated_rank) {}
    std::size_t estimated_rank;
};

/// Iterative method exhausted its budget. Carries the last estimate.
struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& msg, double last_estimate)
        : Error(msg), last_estimate(last_estimate) {}
    double last_estimate;
};

/// Malformed or inconsistent input data (ingestion, splits, checkpoints).
struct DataError : Error {
    using Error::Error;
    int exit_code() const override { return kExitData; }
};

/// Invalid configuration or usage.
struct ConfigError : Error {
    using Error::Error;
    int exit_code() const override { return kExitUsage; }
};

/// Training diverged (non-finite loss).
struct TrainingError : Error {
    explicit TrainingError(const std::string& msg, std::size_t epoch)
        : Error(msg), epoch(epoch) {}
    std::size_t epoch;
    int exit_code() const override { return kExitTraining; }
};

}  // namespace tined
