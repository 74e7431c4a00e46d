#pragma once

// Shared fixtures for the unit and acceptance tests: deterministic synthetic
// panels and a Gauss-Hermite integrator used as an independent oracle for
// the back-transform moment formulas.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mecluster/boxcox.hpp"
#include "mecluster/panel.hpp"
#include "mecluster/rng.hpp"

namespace testutil {

// Panel with `per_group` individuals around each center, reports jittered by
// N(0, sd^2) per day, outcome = group index + outcome_sd * N(0,1). Centers
// must be far enough apart that every clustering run recovers the partition.
inline mecluster::ExposurePanel blob_panel(int per_group,
                                           const std::vector<Eigen::VectorXd>& centers,
                                           double sd, int days, std::uint64_t seed,
                                           double outcome_sd = 0.05) {
    mecluster::ExposurePanel panel;
    panel.n_components = static_cast<int>(centers.front().size());
    mecluster::RngStream rng(seed);
    int id = 0;
    for (std::size_t g = 0; g < centers.size(); ++g) {
        for (int i = 0; i < per_group; ++i) {
            mecluster::Individual ind;
            ind.id = "i" + std::to_string(id++);
            ind.covariates = Eigen::VectorXd(0);
            ind.reports.resize(days, panel.n_components);
            for (int t = 0; t < days; ++t)
                for (int m = 0; m < panel.n_components; ++m) {
                    double v = centers[g][m] + rng.normal(0.0, sd);
                    if (v <= 0.05) v = 0.05;
                    ind.reports(t, m) = v;
                }
            ind.outcome = static_cast<double>(g) + rng.normal(0.0, outcome_sd);
            panel.individuals.push_back(std::move(ind));
        }
    }
    return panel;
}

// Panel generated from the random-intercept model on the transformed scale:
// g_lambda(y_it) = beta0 + x_i' beta + u_i + eps_it. Covariates are N(0,1).
// Draws whose back-transform would leave the domain are redrawn.
inline mecluster::ExposurePanel error_model_panel(int n, int days, double lambda,
                                                  double beta0,
                                                  const Eigen::VectorXd& beta,
                                                  double sigma_u, double sigma_eps,
                                                  std::uint64_t seed,
                                                  bool with_outcome = false,
                                                  double outcome_coef = 0.0) {
    mecluster::ExposurePanel panel;
    panel.n_components = 1;
    mecluster::RngStream rng(seed);
    for (int i = 0; i < n; ++i) {
        mecluster::Individual ind;
        ind.id = "i" + std::to_string(i);
        ind.covariates.resize(beta.size());
        for (Eigen::Index k = 0; k < beta.size(); ++k) ind.covariates[k] = rng.normal();
        double outcome = 0.0;
        if (with_outcome) {
            outcome = rng.uniform() < 0.5 ? 0.0 : 1.0;
            ind.outcome = outcome;
        }
        const double u = rng.normal(0.0, sigma_u);
        const double mean_i =
            beta0 + ind.covariates.dot(beta) + outcome_coef * outcome + u;
        ind.reports.resize(days, 1);
        for (int t = 0; t < days; ++t) {
            for (int attempt = 0;; ++attempt) {
                const double z = mean_i + rng.normal(0.0, sigma_eps);
                if (lambda == 1.0) {
                    ind.reports(t, 0) = z + 1.0;
                    break;
                }
                const auto y = mecluster::boxcox::try_inverse(z, lambda);
                if (y && *y > 1e-8) {
                    ind.reports(t, 0) = *y;
                    break;
                }
                if (attempt > 200) {
                    ind.reports(t, 0) = 1e-6;
                    break;
                }
            }
        }
        panel.individuals.push_back(std::move(ind));
    }
    return panel;
}

// Gauss-Hermite nodes and weights (physicists' convention, weight e^{-x^2})
// via the Golub-Welsch eigenvalue method.
struct GaussHermite {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;

    explicit GaussHermite(int n) {
        Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
        for (int k = 1; k < n; ++k) {
            const double b = std::sqrt(k / 2.0);
            jacobi(k, k - 1) = b;
            jacobi(k - 1, k) = b;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
        nodes = es.eigenvalues();
        weights.resize(n);
        const double total = std::sqrt(M_PI);
        for (int k = 0; k < n; ++k) {
            const double v0 = es.eigenvectors()(0, k);
            weights[k] = total * v0 * v0;
        }
    }

    // E[f(X)] for X ~ N(mu, sigma2).
    template <typename F>
    double normal_expectation(F f, double mu, double sigma2) const {
        const double scale = std::sqrt(2.0 * sigma2);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < nodes.size(); ++k)
            acc += weights[k] * f(mu + scale * nodes[k]);
        return acc / std::sqrt(M_PI);
    }
};

inline double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

} // namespace testutil
