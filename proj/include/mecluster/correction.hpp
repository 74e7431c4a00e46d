#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mecluster/cluster.hpp"
#include "mecluster/health_model.hpp"
#include "mecluster/mixed_model.hpp"
#include "mecluster/nci.hpp"
#include "mecluster/panel.hpp"

namespace mecluster {

enum class CorrectionMethod { naive, rc, simex, mi, mi_null };

std::string method_name(CorrectionMethod method);
// Stable integer used in RNG stream keying; never reuse or renumber.
std::uint64_t method_stream_id(CorrectionMethod method);

struct SimexOptions {
    std::vector<double> zeta_grid{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    int replicates = 300;
    std::vector<int> degrees{2};  // extrapolation polynomial degrees, each in 2..4
};

struct CorrectionOptions {
    int n_clusters = 3;
    ClusterMethod cluster_method = ClusterMethod::kmeans;
    HealthModelKind health_kind = HealthModelKind::linear;
    BlupMode blup_mode = BlupMode::standard;
    MixedModelOptions mixed;
    ClusterOptions cluster;
    SimexOptions simex;
    int imputations = 300;
    // Classify by threshold on the single component instead of clustering
    // (the fixed-cutoff validation design).
    std::optional<double> fixed_cutoff;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct SimexPoint {
    double zeta = 0.0;
    Eigen::VectorXd coefs;  // mean [intercept, cluster effects, covariate coefs]
    int replicates_used = 0;
};

struct CorrectionDiagnostics {
    bool failed = false;
    std::string failure_reason;
    std::vector<SimexPoint> simex_points;
    int n_imputations_used = 0;
    int untransformable_redraws = 0;
    int untransformable_clamped = 0;
    int corrective_mu_fallbacks = 0;
    int simex_failed_replicates = 0;
    int mi_dropped_imputations = 0;
    NciDiagnostics nci;
    // Rubin decomposition of the pairwise-contrast estimates, summed over
    // pairs; logged only, the point estimate is the plain coefficient mean.
    double rubin_between_trace = 0.0;
    double rubin_within_trace = 0.0;
};

struct CorrectionResult {
    CorrectionMethod method = CorrectionMethod::naive;
    int simex_degree = 0;  // 0 unless method == simex
    Classifier classifier; // frozen stage-2 rule
    Eigen::VectorXi memberships;
    HealthFit health;
    ContrastSet contrasts;
    CorrectionDiagnostics diagnostics;
};

// Cross-pipeline cache for running several methods on one panel with one
// options set: the naive stage and the error-model fits are shared. Optional
// everywhere; pass nullptr to recompute.
struct PipelineCache {
    std::optional<Eigen::MatrixXd> naive_means;
    std::optional<Classifier> naive_classifier;
    std::optional<ErrorModelFit> fit_plain;    // no-outcome error model
    std::optional<ErrorModelFit> fit_outcome;  // outcome-including error model
};

// Stage 1 individual report means, stage 2 clustering on them, stage 3
// health model on the memberships.
CorrectionResult correct_naive(const ExposurePanel& panel, const CorrectionOptions& opts,
                               PipelineCache* cache = nullptr);

// Regression-calibration flavor: stage 1 usual-exposure estimates from the
// no-outcome error model, then stages 2 and 3 as in naive.
CorrectionResult correct_rc(const ExposurePanel& panel, const CorrectionOptions& opts,
                            PipelineCache* cache = nullptr);

// Simulation-extrapolation: adds transformed-scale noise with a corrective
// mean at each zeta, reruns stages 2 (frozen naive classifier) and 3 per
// replicate, averages, and extrapolates each coefficient to zeta = -1.
// Returns one result per requested extrapolation degree (shared replicates).
std::vector<CorrectionResult> correct_simex(const ExposurePanel& panel,
                                            const CorrectionOptions& opts,
                                            PipelineCache* cache = nullptr);

// Multiple imputation: error model with (or without, the NULL variant) the
// outcome as covariate, classifier frozen on its usual-exposure estimates,
// then L imputed panels classified and fitted, coefficients averaged.
CorrectionResult correct_mi(const ExposurePanel& panel, const CorrectionOptions& opts,
                            bool include_outcome, PipelineCache* cache = nullptr);

// Mean shift mu(zeta) of the synthetic transformed-scale noise that keeps
// the noisy back-transformed mean consistent with the observed original-
// scale mean: root of
//   ybar = (L(mu))^(1/lambda) + (1-lambda)/2 * (L(mu))^(1/lambda-2) * zeta*s2
// with L(mu) = lambda*(ybar_g + mu) + 1, solved by bracketed bisection to
// residual 1e-10. Exact branches: 0 at lambda == 1, -zeta*s2/2 for
// lambda <= 1e-3 (the log-transform limit). `days` is accepted for
// interface stability; the equation does not involve it. When no bracket
// with a sign change exists the Taylor approximation
// -zeta*s2*(1-lambda)/2 is returned and *used_fallback set.
double solve_corrective_mu(double ybar_orig, double ybar_transformed, double lambda,
                           double zeta, double sigma2_eps, int days,
                           bool* used_fallback = nullptr);

// Least-squares polynomial of the given degree through (zetas, values),
// evaluated at `at`. Exposed for the extrapolation tests.
double simex_extrapolate(const std::vector<double>& zetas,
                         const std::vector<double>& values, int degree, double at);

} // namespace mecluster
