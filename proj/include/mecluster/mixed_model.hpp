#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mecluster/errors.hpp"
#include "mecluster/panel.hpp"

namespace mecluster {

// How the transformed-scale usual exposure weighs the fixed part against the
// individual's observed mean. `standard` is the textbook random-intercept
// shrinkage sigma2_eps/T / (sigma2_u + sigma2_eps/T); `paper` reproduces the
// printed weight sigma2_u / (sigma2_u + sigma2_eps) verbatim.
enum class BlupMode { standard, paper };

struct MixedModelOptions {
    // Skip the lambda profile and fit at this value. With fixed_lambda == 1
    // the transform is affine (v - 1) and reports may be nonpositive.
    std::optional<double> fixed_lambda;
    // Force sigma2_u / sigma2_eps; used to cross-check against plain OLS.
    std::optional<double> fixed_ratio;
    double lambda_lo = 0.05;
    double lambda_hi = 2.0;
    int lambda_grid = 20;       // coarse profile grid before refinement
    int max_lambda_evals = 200; // outer cap
    int max_ratio_iters = 100;  // inner cap per lambda
    double tol = 1e-8;          // relative log-likelihood change
};

// One exposure component's error model on the transformed scale:
// g(y_it) = beta0 + x_i' beta + u_i + eps_it. When with_outcome, the health
// outcome is appended as the LAST entry of the design (and of beta).
struct ErrorModelComponent {
    int component = 0;  // column in the panel's report matrix
    double lambda = 1.0;
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double sigma2_u = 0.0;
    double sigma2_eps = 0.0;
    double loglik = 0.0;  // profile ML log-likelihood incl. transform Jacobian
    bool with_outcome = false;
    int lambda_evals = 0;
};

struct ErrorModelFit {
    std::vector<ErrorModelComponent> components;
    bool with_outcome = false;
    int n_components() const { return static_cast<int>(components.size()); }
};

// Carries the best parameters found when an iteration cap aborts the fit.
class MixedModelConvergenceError : public ConvergenceError {
public:
    MixedModelConvergenceError(const std::string& msg, ErrorModelComponent best)
        : ConvergenceError(msg), best_(std::move(best)) {}
    const ErrorModelComponent& best() const noexcept { return best_; }

private:
    ErrorModelComponent best_;
};

// Maximum-likelihood fit of one component's random-intercept model with a
// profiled Box-Cox transform. The inner problem (beta, sigma2_eps) given the
// variance ratio is solved exactly by generalized-least-squares profiling;
// the ratio and lambda are maximized numerically. Full ML, not REML.
// sigma2_u may legitimately come out 0 (boundary).
ErrorModelComponent fit_component(const ExposurePanel& panel, int component,
                                  bool with_outcome,
                                  const MixedModelOptions& opts = {});

ErrorModelFit fit_error_model(const ExposurePanel& panel, bool with_outcome,
                              const MixedModelOptions& opts = {});

// Transformed-scale usual-exposure predictor for one individual.
double blup_transformed(const ErrorModelComponent& comp, const Individual& ind,
                        BlupMode mode = BlupMode::standard);

// Profile log-likelihood of one component at a pinned (lambda, ratio);
// exposed so tests can audit the profile against the returned optimum.
double component_profile_loglik(const ExposurePanel& panel, int component,
                                bool with_outcome, double lambda, double ratio);
// Same with the variance ratio profiled out (inner maximization included).
double component_profile_loglik(const ExposurePanel& panel, int component,
                                bool with_outcome, double lambda);

} // namespace mecluster
