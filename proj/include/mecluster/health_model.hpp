#pragma once

#include <Eigen/Dense>

namespace mecluster {

enum class HealthModelKind { linear, logistic };

struct IrlsOptions {
    int max_iter = 100;
    double tol = 1e-10;  // max absolute coefficient change
};

// Health-outcome regression on cluster membership: outcome ~ intercept +
// dummy(cluster 2..C) + covariates, cluster 1 as reference.
struct HealthFit {
    HealthModelKind kind = HealthModelKind::linear;
    int n_clusters = 0;
    double intercept = 0.0;
    Eigen::VectorXd cluster_effects;  // length C-1, effect of cluster c vs cluster 1
    Eigen::VectorXd covariate_coefs;  // length p
    double sigma_e = 0.0;             // linear only, denominator n - rank
    int iterations = 0;               // IRLS steps used (logistic)
    Eigen::MatrixXd effect_vcov;      // sampling covariance of cluster_effects
};

// All C(C-1)/2 pairwise cluster contrasts in the fixed order
// (1,2), (1,3), ..., (1,C), (2,3), ..., (C-1,C); entry (c,c') is the effect
// of moving from cluster c to cluster c'.
struct ContrastSet {
    int n_clusters = 0;
    Eigen::VectorXd values;

    static int pair_count(int n_clusters) { return n_clusters * (n_clusters - 1) / 2; }
    // Flat index of pair (c, c'), 1 <= c < c' <= C.
    static int pair_index(int c, int c_prime, int n_clusters);
    double contrast(int c, int c_prime) const;
};

// Ordinary least squares via column-pivoted QR. memberships hold labels in
// 1..C; every label must occur (FailedClassification otherwise). Throws
// DegenerateModel on rank-deficient designs. x may have zero columns.
HealthFit fit_linear(const Eigen::VectorXd& outcome, const Eigen::VectorXi& memberships,
                     const Eigen::MatrixXd& x, int n_clusters);

// Logistic regression by iteratively reweighted least squares. Outcomes must
// be 0/1. Throws SeparationError when the likelihood has no finite maximizer
// (including the degenerate-cluster shortcut where all outcomes in one
// cluster are equal), ConvergenceError when the iteration cap is hit without
// divergence.
HealthFit fit_logistic(const Eigen::VectorXd& outcome, const Eigen::VectorXi& memberships,
                       const Eigen::MatrixXd& x, int n_clusters,
                       const IrlsOptions& opts = {});

HealthFit fit_health_model(HealthModelKind kind, const Eigen::VectorXd& outcome,
                           const Eigen::VectorXi& memberships, const Eigen::MatrixXd& x,
                           int n_clusters);

ContrastSet expand_contrasts(const HealthFit& fit);
// Contrasts from a raw per-cluster effect vector (entry 0 is the reference).
ContrastSet expand_contrasts(const Eigen::VectorXd& effects_vs_reference, int n_clusters);

} // namespace mecluster
