#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "mecluster/errors.hpp"

namespace mecluster {

// Box-Cox power-transform parameter, restricted to lambda > 0. The log case
// (lambda == 0) is never fitted here; the lambda -> 0 limit is handled
// analytically where it matters (see correction::solve_corrective_mu).
class BoxCoxLambda {
public:
    explicit BoxCoxLambda(double value) : value_(value) {
        if (!(value > 0.0))
            throw std::invalid_argument("BoxCoxLambda must be positive, got " +
                                        std::to_string(value));
    }
    double value() const noexcept { return value_; }

private:
    double value_;
};

namespace boxcox {

// g_lambda(v) = (v^lambda - 1) / lambda, defined for v > 0.
inline double transform(double v, double lambda) {
    if (!(v > 0.0))
        throw std::invalid_argument("Box-Cox transform needs v > 0, got " +
                                    std::to_string(v));
    return (std::pow(v, lambda) - 1.0) / lambda;
}

// Lowest transformed value with a valid back-transform: t > -1/lambda.
inline double domain_lower_bound(double lambda) { return -1.0 / lambda; }

// Inverse without throwing; empty when lambda*t + 1 <= 0. The base is
// tested before pow so boundary roundoff yields a clean rejection, not NaN.
inline std::optional<double> try_inverse(double t, double lambda) noexcept {
    const double base = lambda * t + 1.0;
    if (!(base > 0.0)) return std::nullopt;
    return std::pow(base, 1.0 / lambda);
}

// g^{-1}_lambda(t) = (lambda*t + 1)^{1/lambda}; throws on invalid domain.
inline double inverse(double t, double lambda) {
    const auto v = try_inverse(t, lambda);
    if (!v) throw UntransformableValue(t, lambda);
    return *v;
}

inline double transform(double v, const BoxCoxLambda& lambda) {
    return transform(v, lambda.value());
}
inline double inverse(double t, const BoxCoxLambda& lambda) {
    return inverse(t, lambda.value());
}

} // namespace boxcox
} // namespace mecluster
