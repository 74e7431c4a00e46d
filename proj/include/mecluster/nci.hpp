#pragma once

#include <Eigen/Dense>

#include "mecluster/mixed_model.hpp"
#include "mecluster/panel.hpp"

namespace mecluster {

struct NciDiagnostics {
    int boundary_clamped = 0;  // lambda*mu+1 <= 0, prediction clamped to boundary
    int floored = 0;           // Taylor value nonpositive, correction term dropped
};

// Original-scale usual-exposure estimate for one individual and component:
// second-order Taylor back-transform of the transformed-scale predictor,
// (lambda*mu+1)^(1/lambda) + (1-lambda)/2 * (lambda*mu+1)^(1/lambda-2) *
// sigma2_eps with mu the BLUP. At lambda == 1 this is exactly mu + 1 (the
// identity-scale predictor, which may be nonpositive for identity-scale
// data); otherwise the result is strictly positive.
double estimate_usual_component(const ErrorModelComponent& comp, const Individual& ind,
                                BlupMode mode = BlupMode::standard,
                                NciDiagnostics* diag = nullptr);

// I x M matrix of usual-exposure estimates for the whole panel. The fit is
// normally the no-outcome error model; outcome-including fits are accepted
// (the multiple-imputation pipeline trains its classifier on them).
Eigen::MatrixXd estimate_usual(const ErrorModelFit& fit, const ExposurePanel& panel,
                               BlupMode mode = BlupMode::standard,
                               NciDiagnostics* diag = nullptr);

} // namespace mecluster
