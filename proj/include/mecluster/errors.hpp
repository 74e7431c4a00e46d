#pragma once

#include <stdexcept>
#include <string>

namespace mecluster {

// Base for everything this library throws on its own behalf, so callers can
// separate pipeline failures from programming errors (std::invalid_argument).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Back-transform requested outside the domain of the Box-Cox inverse
// (lambda * t + 1 <= 0). Carries the offending value and lambda.
class UntransformableValue : public Error {
public:
    UntransformableValue(double value, double lambda)
        : Error("untransformable value " + std::to_string(value) +
                " for lambda " + std::to_string(lambda)),
          value_(value), lambda_(lambda) {}
    double value() const noexcept { return value_; }
    double lambda() const noexcept { return lambda_; }

private:
    double value_;
    double lambda_;
};

// A cluster ended up empty (after the allowed reseeding attempts) or a
// required cluster is unoccupied in a classification passed downstream.
class FailedClassification : public Error {
public:
    explicit FailedClassification(const std::string& msg) : Error(msg) {}
};

// Logistic likelihood has no finite maximizer (separated data).
class SeparationError : public Error {
public:
    explicit SeparationError(const std::string& msg) : Error(msg) {}
};

// A variance collapsed to zero where the model needs it positive, or a
// design matrix lost rank.
class DegenerateModel : public Error {
public:
    explicit DegenerateModel(const std::string& msg) : Error(msg) {}
};

// Iteration cap hit before the tolerance was met.
class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

// Malformed input data (CSV / JSON config / panel inconsistencies).
class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error(msg) {}
};

} // namespace mecluster
