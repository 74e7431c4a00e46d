#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace mecluster {

enum class ClusterMethod { kmeans, gmm };

struct ClusterOptions {
    int restarts = 10;        // independent k-means++ starts, best WCSS wins
    int max_iter_kmeans = 500;
    int max_iter_em = 500;
    double em_tol = 1e-8;     // relative log-likelihood change
    int reseed_attempts = 5;  // full re-initializations before giving up
};

// Fitted pattern model on standardized exposure space. Cluster means are
// stored in canonical order (lexicographic by coordinates) so labels are
// reproducible across runs and methods.
struct ClusterModel {
    ClusterMethod method = ClusterMethod::kmeans;
    int n_clusters = 0;
    Eigen::VectorXd center_shift;  // column means of the training data
    Eigen::VectorXd scale;         // column sds (denominator I-1)
    Eigen::MatrixXd means;         // C x M, standardized scale
    Eigen::VectorXd weights;       // mixture weights (gmm only)
    double sigma2 = 0.0;           // shared spherical variance (gmm only)
    double wcss = 0.0;             // winning k-means objective
    double loglik = 0.0;           // final EM log-likelihood
    bool em_converged = true;
    std::vector<double> objective_trace;  // winning run, one entry per iteration

    // Fingerprint of everything classification depends on; lets pipelines
    // assert the frozen classifier never drifts.
    std::uint64_t content_hash() const;
};

// Lloyd's algorithm with k-means++ seeding, `restarts` starts, lowest WCSS
// kept. Data rows are observations on the original scale; standardization is
// fitted here and stored in the model. Deterministic given (data, C, seed).
// Throws FailedClassification when every restart of every reseeding attempt
// produced an empty cluster.
ClusterModel fit_kmeans(const Eigen::MatrixXd& data, int n_clusters,
                        std::uint64_t seed, const ClusterOptions& opts = {});

// Gaussian mixture with common spherical covariance sigma2 * I and free
// weights, EM-fitted, initialized from fit_kmeans on the same data. Throws
// DegenerateModel when sigma2 collapses, FailedClassification when a cluster
// is empty under hard assignment after all reseeding attempts.
ClusterModel fit_gmm(const Eigen::MatrixXd& data, int n_clusters,
                     std::uint64_t seed, const ClusterOptions& opts = {});

// Assigns a raw-scale M-vector to a cluster, returning a label in 1..C.
// kmeans: nearest mean; gmm: highest weighted density. Ties break to the
// lowest label.
int classify(const ClusterModel& model, const Eigen::VectorXd& y);
Eigen::VectorXi classify_all(const ClusterModel& model, const Eigen::MatrixXd& data);

// Classifies a whole matrix after standardizing each column by its OWN mean
// and sd (denominator I-1) instead of the stored training moments. Use this
// when the rows are a different estimate of the same individuals than the
// training data (true exposures, noise-inflated or imputed exposures); the
// per-matrix standardization aligns the input with the training cloud, so
// the comparison is not distorted by the estimator's variance. On the
// training data itself this reproduces the training assignment.
Eigen::VectorXi classify_all_rescaled(const ClusterModel& model,
                                      const Eigen::MatrixXd& data);

// Frozen classification rule shared by the correction pipelines: either a
// fitted ClusterModel or a fixed threshold on a single component (the
// no-clustering design used for method validation on one exposure).
class Classifier {
public:
    static Classifier from_model(ClusterModel model);
    // y <= cutoff -> 1, y > cutoff -> 2.
    static Classifier fixed_cutoff(double cutoff);

    int n_clusters() const;
    int classify(const Eigen::VectorXd& y) const;
    Eigen::VectorXi classify_all(const Eigen::MatrixXd& data) const;
    // Per-matrix standardization variant; cutoff classifiers ignore the
    // rescaling because the threshold is defined on the raw scale.
    Eigen::VectorXi classify_all_rescaled(const Eigen::MatrixXd& data) const;
    std::uint64_t content_hash() const;

    bool has_model() const { return model_.has_value(); }
    const ClusterModel& model() const { return *model_; }

private:
    std::optional<ClusterModel> model_;
    std::optional<double> cutoff_;
};

} // namespace mecluster
