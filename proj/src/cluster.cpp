#include "mecluster/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mecluster/errors.hpp"
#include "mecluster/rng.hpp"

namespace mecluster {

namespace {

constexpr std::uint64_t kKmeansTag = 0x6b6d65616e73ULL; // "kmeans"
constexpr std::uint64_t kGmmTag = 0x676d6dULL;          // "gmm"

std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t n) {
    // FNV-1a, enough for change detection.
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_matrix(std::uint64_t h, const Eigen::MatrixXd& m) {
    h = hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return h;
}

struct Standardized {
    Eigen::MatrixXd data;
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;
};

Standardized standardize(const Eigen::MatrixXd& raw) {
    const Eigen::Index n = raw.rows(), m = raw.cols();
    if (n < 2) throw std::invalid_argument("clustering needs at least 2 observations");
    Standardized s;
    s.shift = raw.colwise().mean();
    Eigen::MatrixXd centered = raw.rowwise() - s.shift.transpose();
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(n - 1))
                  .cwiseSqrt()
                  .transpose();
    for (Eigen::Index j = 0; j < m; ++j)
        if (!(s.scale[j] > 0.0))
            throw DegenerateModel("clustering input column " + std::to_string(j) +
                                  " is constant");
    s.data = centered.array().rowwise() / s.scale.transpose().array();
    return s;
}

// Sorts cluster means lexicographically by coordinates and applies the same
// permutation to the per-cluster vectors.
void canonicalize(Eigen::MatrixXd& means, Eigen::VectorXd* weights) {
    const int c = static_cast<int>(means.rows());
    std::vector<int> order(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) order[static_cast<std::size_t>(k)] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (Eigen::Index j = 0; j < means.cols(); ++j) {
            if (means(a, j) < means(b, j)) return true;
            if (means(a, j) > means(b, j)) return false;
        }
        return a < b;
    });
    Eigen::MatrixXd sorted_means(means.rows(), means.cols());
    Eigen::VectorXd sorted_weights;
    if (weights) sorted_weights.resize(weights->size());
    for (int k = 0; k < c; ++k) {
        sorted_means.row(k) = means.row(order[static_cast<std::size_t>(k)]);
        if (weights) sorted_weights[k] = (*weights)[order[static_cast<std::size_t>(k)]];
    }
    means = sorted_means;
    if (weights) *weights = sorted_weights;
}

// k-means++ seeding on standardized data.
Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& x, int c, RngStream& rng) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centers(c, x.cols());
    std::vector<double> d2(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
    Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    centers.row(0) = x.row(first);
    for (int k = 1; k < c; ++k) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = (x.row(i) - centers.row(k - 1)).squaredNorm();
            d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], d);
            total += d2[static_cast<std::size_t>(i)];
        }
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (acc >= r) { pick = i; break; }
            }
        } else {
            // All remaining distances zero (duplicate-heavy data); the Lloyd
            // run will surface the empty cluster.
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        }
        centers.row(k) = x.row(pick);
    }
    return centers;
}

struct LloydResult {
    Eigen::MatrixXd means;
    double wcss = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
    bool valid = false;
};

LloydResult run_lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers, int max_iter) {
    const Eigen::Index n = x.rows();
    const int c = static_cast<int>(centers.rows());
    LloydResult res;
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double wcss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (x.row(i) - centers.row(0)).squaredNorm();
            for (int k = 1; k < c; ++k) {
                const double d = (x.row(i) - centers.row(k)).squaredNorm();
                if (d < best_d) { best_d = d; best = k; }
            }
            wcss += best_d;
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        res.trace.push_back(wcss);
        if (!changed) {
            res.means = centers;
            res.wcss = wcss;
            res.valid = true;
            return res;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(c, x.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(c);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
            counts[assign[static_cast<std::size_t>(i)]] += 1.0;
        }
        for (int k = 0; k < c; ++k) {
            if (counts[k] == 0.0) return res; // empty cluster, restart invalid
            centers.row(k) = sums.row(k) / counts[k];
        }
    }
    // Assignment cycles are possible in exact arithmetic only; accept the
    // last state rather than looping forever.
    res.means = centers;
    res.wcss = res.trace.back();
    res.valid = true;
    return res;
}

int nearest_center(const Eigen::MatrixXd& means, const Eigen::RowVectorXd& z) {
    int best = 0;
    double best_d = (z - means.row(0)).squaredNorm();
    for (int k = 1; k < means.rows(); ++k) {
        const double d = (z - means.row(k)).squaredNorm();
        if (d < best_d) { best_d = d; best = k; }
    }
    return best;
}

} // namespace

std::uint64_t ClusterModel::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto tag = static_cast<std::uint64_t>(method);
    h = hash_bytes(h, &tag, sizeof tag);
    h = hash_bytes(h, &n_clusters, sizeof n_clusters);
    h = hash_matrix(h, center_shift);
    h = hash_matrix(h, scale);
    h = hash_matrix(h, means);
    h = hash_matrix(h, weights);
    h = hash_bytes(h, &sigma2, sizeof sigma2);
    return h;
}

ClusterModel fit_kmeans(const Eigen::MatrixXd& data, int n_clusters,
                        std::uint64_t seed, const ClusterOptions& opts) {
    if (n_clusters < 1) throw std::invalid_argument("n_clusters must be >= 1");
    if (data.rows() < n_clusters)
        throw std::invalid_argument("fewer observations than clusters");
    const Standardized s = standardize(data);

    for (int attempt = 0; attempt < opts.reseed_attempts; ++attempt) {
        LloydResult best;
        for (int r = 0; r < opts.restarts; ++r) {
            RngStream rng = RngStream::substream(
                seed, {kKmeansTag, static_cast<std::uint64_t>(attempt),
                       static_cast<std::uint64_t>(r)});
            Eigen::MatrixXd centers = seed_centers(s.data, n_clusters, rng);
            LloydResult res = run_lloyd(s.data, std::move(centers), opts.max_iter_kmeans);
            if (res.valid && res.wcss < best.wcss) best = std::move(res);
        }
        if (best.valid) {
            ClusterModel model;
            model.method = ClusterMethod::kmeans;
            model.n_clusters = n_clusters;
            model.center_shift = s.shift;
            model.scale = s.scale;
            model.means = best.means;
            canonicalize(model.means, nullptr);
            model.wcss = best.wcss;
            model.objective_trace = std::move(best.trace);
            return model;
        }
    }
    throw FailedClassification("k-means: empty cluster in every restart of " +
                               std::to_string(opts.reseed_attempts) + " reseeding attempts");
}

ClusterModel fit_gmm(const Eigen::MatrixXd& data, int n_clusters,
                     std::uint64_t seed, const ClusterOptions& opts) {
    if (n_clusters < 1) throw std::invalid_argument("n_clusters must be >= 1");
    if (data.rows() < n_clusters)
        throw std::invalid_argument("fewer observations than clusters");
    const Standardized s = standardize(data);
    const Eigen::Index n = s.data.rows();
    const Eigen::Index m = s.data.cols();
    const double nm = static_cast<double>(n) * static_cast<double>(m);

    for (int attempt = 0; attempt < opts.reseed_attempts; ++attempt) {
        // Hard-assignment start from the k-means solution of this attempt.
        ClusterModel init = fit_kmeans(data, n_clusters,
                                       RngStream::key(seed, {kGmmTag, static_cast<std::uint64_t>(attempt)}),
                                       opts);
        Eigen::MatrixXd means = init.means;
        Eigen::VectorXd weights = Eigen::VectorXd::Zero(n_clusters);
        for (Eigen::Index i = 0; i < n; ++i)
            weights[nearest_center(means, s.data.row(i))] += 1.0;
        weights /= static_cast<double>(n);
        double sigma2 = std::max(init.wcss / nm, 1e-8);

        Eigen::MatrixXd resp(n, n_clusters);
        Eigen::VectorXd log_w(n_clusters);
        std::vector<double> trace;
        double loglik = -std::numeric_limits<double>::infinity();
        bool converged = false;

        for (int iter = 0; iter < opts.max_iter_em; ++iter) {
            for (int k = 0; k < n_clusters; ++k)
                log_w[k] = (weights[k] > 0.0) ? std::log(weights[k])
                                              : -std::numeric_limits<double>::infinity();
            const double log_norm =
                -0.5 * static_cast<double>(m) *
                std::log(2.0 * std::numbers::pi * sigma2);
            double ll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                double max_lp = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < n_clusters; ++k) {
                    const double lp = log_w[k] + log_norm -
                                      (s.data.row(i) - means.row(k)).squaredNorm() /
                                          (2.0 * sigma2);
                    resp(i, k) = lp;
                    max_lp = std::max(max_lp, lp);
                }
                double sum = 0.0;
                for (int k = 0; k < n_clusters; ++k) sum += std::exp(resp(i, k) - max_lp);
                const double lse = max_lp + std::log(sum);
                ll += lse;
                for (int k = 0; k < n_clusters; ++k)
                    resp(i, k) = std::exp(resp(i, k) - lse);
            }
            trace.push_back(ll);
            if (iter > 0 && std::abs(ll - loglik) <= opts.em_tol * (1.0 + std::abs(ll))) {
                loglik = ll;
                converged = true;
                break;
            }
            loglik = ll;

            const Eigen::VectorXd nk = resp.colwise().sum();
            double ss = 0.0;
            for (int k = 0; k < n_clusters; ++k) {
                if (nk[k] > 0.0)
                    means.row(k) = (resp.col(k).transpose() * s.data) / nk[k];
                for (Eigen::Index i = 0; i < n; ++i)
                    ss += resp(i, k) * (s.data.row(i) - means.row(k)).squaredNorm();
            }
            weights = nk / static_cast<double>(n);
            sigma2 = ss / nm;
            if (sigma2 <= 1e-10)
                throw DegenerateModel("gmm: shared variance collapsed to " +
                                      std::to_string(sigma2));
        }

        ClusterModel model;
        model.method = ClusterMethod::gmm;
        model.n_clusters = n_clusters;
        model.center_shift = s.shift;
        model.scale = s.scale;
        model.means = means;
        model.weights = weights;
        model.sigma2 = sigma2;
        model.loglik = loglik;
        model.em_converged = converged;
        model.objective_trace = std::move(trace);
        canonicalize(model.means, &model.weights);

        // Every cluster must survive hard assignment, else the health-model
        // stage cannot see it.
        Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_clusters);
        const Eigen::VectorXi labels = classify_all(model, data);
        for (Eigen::Index i = 0; i < n; ++i) counts[labels[i] - 1] += 1;
        if ((counts.array() > 0).all()) return model;
    }
    throw FailedClassification("gmm: empty cluster after " +
                               std::to_string(opts.reseed_attempts) + " reseeding attempts");
}

namespace {

int classify_standardized(const ClusterModel& model, const Eigen::RowVectorXd& z) {
    if (model.method == ClusterMethod::kmeans) return nearest_center(model.means, z) + 1;
    // Shared spherical variance: the density ordering reduces to
    // ||z - mu_k||^2 / (2 sigma2) - log w_k, smaller is better.
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (int k = 0; k < model.n_clusters; ++k) {
        const double lw = (model.weights[k] > 0.0)
                              ? std::log(model.weights[k])
                              : -std::numeric_limits<double>::infinity();
        const double score =
            (z - model.means.row(k)).squaredNorm() / (2.0 * model.sigma2) - lw;
        if (score < best_score) { best_score = score; best = k; }
    }
    return best + 1;
}

} // namespace

int classify(const ClusterModel& model, const Eigen::VectorXd& y) {
    if (y.size() != model.means.cols())
        throw std::invalid_argument("classify: dimension mismatch");
    const Eigen::RowVectorXd z =
        ((y - model.center_shift).array() / model.scale.array()).transpose();
    return classify_standardized(model, z);
}

Eigen::VectorXi classify_all(const ClusterModel& model, const Eigen::MatrixXd& data) {
    Eigen::VectorXi labels(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        labels[i] = classify(model, data.row(i).transpose());
    return labels;
}

Eigen::VectorXi classify_all_rescaled(const ClusterModel& model,
                                      const Eigen::MatrixXd& data) {
    if (data.cols() != model.means.cols())
        throw std::invalid_argument("classify: dimension mismatch");
    const Standardized s = standardize(data);
    Eigen::VectorXi labels(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        labels[i] = classify_standardized(model, s.data.row(i));
    return labels;
}

Classifier Classifier::from_model(ClusterModel model) {
    Classifier c;
    c.model_ = std::move(model);
    return c;
}

Classifier Classifier::fixed_cutoff(double cutoff) {
    Classifier c;
    c.cutoff_ = cutoff;
    return c;
}

int Classifier::n_clusters() const { return model_ ? model_->n_clusters : 2; }

int Classifier::classify(const Eigen::VectorXd& y) const {
    if (model_) return mecluster::classify(*model_, y);
    if (y.size() != 1)
        throw std::invalid_argument("fixed-cutoff classifier expects one component");
    return (y[0] <= *cutoff_) ? 1 : 2;
}

Eigen::VectorXi Classifier::classify_all(const Eigen::MatrixXd& data) const {
    if (model_) return mecluster::classify_all(*model_, data);
    Eigen::VectorXi labels(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        labels[i] = classify(data.row(i).transpose());
    return labels;
}

Eigen::VectorXi Classifier::classify_all_rescaled(const Eigen::MatrixXd& data) const {
    if (model_) return mecluster::classify_all_rescaled(*model_, data);
    return classify_all(data);
}

std::uint64_t Classifier::content_hash() const {
    if (model_) return model_->content_hash();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_bytes(h, &*cutoff_, sizeof(double));
    return h;
}

} // namespace mecluster
