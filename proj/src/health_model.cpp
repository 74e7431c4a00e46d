#include "mecluster/health_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mecluster/errors.hpp"

namespace mecluster {

namespace {

// [1 | dummy(cluster 2..C) | covariates]
Eigen::MatrixXd build_design(const Eigen::VectorXi& memberships, const Eigen::MatrixXd& x,
                             int n_clusters) {
    const Eigen::Index n = memberships.size();
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, 1 + (n_clusters - 1) + p);
    design.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = memberships[i];
        if (label < 1 || label > n_clusters)
            throw std::invalid_argument("membership label " + std::to_string(label) +
                                        " outside 1.." + std::to_string(n_clusters));
        if (label > 1) design(i, label - 1) = 1.0;
    }
    if (p > 0) design.rightCols(p) = x;
    return design;
}

void check_inputs(const Eigen::VectorXd& outcome, const Eigen::VectorXi& memberships,
                  const Eigen::MatrixXd& x, int n_clusters) {
    if (n_clusters < 2) throw std::invalid_argument("health model needs n_clusters >= 2");
    if (outcome.size() != memberships.size())
        throw std::invalid_argument("outcome/membership size mismatch");
    if (x.rows() != 0 && x.rows() != outcome.size())
        throw std::invalid_argument("covariate row count mismatch");
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_clusters);
    for (Eigen::Index i = 0; i < memberships.size(); ++i) {
        const int label = memberships[i];
        if (label >= 1 && label <= n_clusters) counts[label - 1] += 1;
    }
    for (int c = 0; c < n_clusters; ++c)
        if (counts[c] == 0)
            throw FailedClassification("cluster " + std::to_string(c + 1) +
                                       " unoccupied in health-model fit");
}

HealthFit unpack(HealthModelKind kind, const Eigen::VectorXd& beta, int n_clusters,
                 Eigen::Index p) {
    HealthFit fit;
    fit.kind = kind;
    fit.n_clusters = n_clusters;
    fit.intercept = beta[0];
    fit.cluster_effects = beta.segment(1, n_clusters - 1);
    fit.covariate_coefs = p > 0 ? Eigen::VectorXd(beta.tail(p)) : Eigen::VectorXd();
    return fit;
}

} // namespace

int ContrastSet::pair_index(int c, int c_prime, int n_clusters) {
    if (!(1 <= c && c < c_prime && c_prime <= n_clusters))
        throw std::invalid_argument("contrast pair out of range");
    return (c - 1) * n_clusters - (c - 1) * c / 2 + (c_prime - c - 1);
}

double ContrastSet::contrast(int c, int c_prime) const {
    return values[pair_index(c, c_prime, n_clusters)];
}

HealthFit fit_linear(const Eigen::VectorXd& outcome, const Eigen::VectorXi& memberships,
                     const Eigen::MatrixXd& x, int n_clusters) {
    check_inputs(outcome, memberships, x, n_clusters);
    const Eigen::MatrixXd design = build_design(memberships, x, n_clusters);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols())
        throw DegenerateModel("linear health model: design rank " +
                              std::to_string(qr.rank()) + " < " +
                              std::to_string(design.cols()) + " columns");
    const Eigen::VectorXd beta = qr.solve(outcome);
    HealthFit fit = unpack(HealthModelKind::linear, beta, n_clusters, x.cols());
    const double rss = (outcome - design * beta).squaredNorm();
    const double dof = static_cast<double>(design.rows()) - static_cast<double>(qr.rank());
    if (dof <= 0.0) throw DegenerateModel("linear health model: no residual degrees of freedom");
    fit.sigma_e = std::sqrt(rss / dof);
    const Eigen::MatrixXd xtx_inv =
        (design.transpose() * design)
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(design.cols(), design.cols()));
    fit.effect_vcov = fit.sigma_e * fit.sigma_e * xtx_inv.block(1, 1, n_clusters - 1, n_clusters - 1);
    return fit;
}

HealthFit fit_logistic(const Eigen::VectorXd& outcome, const Eigen::VectorXi& memberships,
                       const Eigen::MatrixXd& x, int n_clusters, const IrlsOptions& opts) {
    check_inputs(outcome, memberships, x, n_clusters);
    for (Eigen::Index i = 0; i < outcome.size(); ++i)
        if (outcome[i] != 0.0 && outcome[i] != 1.0)
            throw std::invalid_argument("logistic outcome must be 0/1");

    // With a free dummy per cluster, a cluster whose outcomes are all equal
    // pushes its effect to +-infinity; declare separation up front.
    {
        Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_clusters);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_clusters);
        for (Eigen::Index i = 0; i < outcome.size(); ++i) {
            sums[memberships[i] - 1] += outcome[i];
            counts[memberships[i] - 1] += 1.0;
        }
        for (int c = 0; c < n_clusters; ++c)
            if (sums[c] == 0.0 || sums[c] == counts[c])
                throw SeparationError("logistic health model: cluster " +
                                      std::to_string(c + 1) + " has constant outcome");
    }

    const Eigen::MatrixXd design = build_design(memberships, x, n_clusters);
    const Eigen::Index k = design.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        const Eigen::VectorXd eta = design * beta;
        Eigen::VectorXd prob(eta.size());
        Eigen::VectorXd w(eta.size());
        bool saturated = false;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double pi = 1.0 / (1.0 + std::exp(-eta[i]));
            prob[i] = pi;
            w[i] = std::max(pi * (1.0 - pi), 1e-10);
            if (pi > 1.0 - 1e-8 || pi < 1e-8) saturated = true;
        }
        const Eigen::MatrixXd xtwx = design.transpose() * w.asDiagonal() * design;
        const Eigen::VectorXd score = design.transpose() * (outcome - prob);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
        if (ldlt.info() != Eigen::Success)
            throw DegenerateModel("logistic health model: singular weighted design");
        const Eigen::VectorXd step = ldlt.solve(score);
        beta += step;

        if (saturated && beta.lpNorm<Eigen::Infinity>() > 30.0)
            throw SeparationError("logistic health model: diverging coefficients with "
                                  "saturated fitted probabilities");
        if (step.lpNorm<Eigen::Infinity>() < opts.tol) {
            HealthFit fit = unpack(HealthModelKind::logistic, beta, n_clusters, x.cols());
            fit.iterations = iter;
            const Eigen::MatrixXd info_inv =
                ldlt.solve(Eigen::MatrixXd::Identity(k, k));
            fit.effect_vcov = info_inv.block(1, 1, n_clusters - 1, n_clusters - 1);
            return fit;
        }
    }
    if (beta.lpNorm<Eigen::Infinity>() > 15.0)
        throw SeparationError("logistic health model: no convergence, coefficients diverging");
    throw ConvergenceError("logistic health model: IRLS cap of " +
                           std::to_string(opts.max_iter) + " iterations reached");
}

HealthFit fit_health_model(HealthModelKind kind, const Eigen::VectorXd& outcome,
                           const Eigen::VectorXi& memberships, const Eigen::MatrixXd& x,
                           int n_clusters) {
    return kind == HealthModelKind::linear
               ? fit_linear(outcome, memberships, x, n_clusters)
               : fit_logistic(outcome, memberships, x, n_clusters);
}

ContrastSet expand_contrasts(const Eigen::VectorXd& effects_vs_reference, int n_clusters) {
    if (effects_vs_reference.size() != n_clusters - 1)
        throw std::invalid_argument("expand_contrasts: need C-1 effects");
    ContrastSet cs;
    cs.n_clusters = n_clusters;
    cs.values.resize(ContrastSet::pair_count(n_clusters));
    auto effect = [&](int c) { return c == 1 ? 0.0 : effects_vs_reference[c - 2]; };
    for (int c = 1; c <= n_clusters; ++c)
        for (int cp = c + 1; cp <= n_clusters; ++cp)
            cs.values[ContrastSet::pair_index(c, cp, n_clusters)] = effect(cp) - effect(c);
    return cs;
}

ContrastSet expand_contrasts(const HealthFit& fit) {
    return expand_contrasts(fit.cluster_effects, fit.n_clusters);
}

} // namespace mecluster
