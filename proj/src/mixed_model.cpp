#include "mecluster/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mecluster {

namespace {

double transform_value(double v, double lambda) {
    // lambda == 1 is kept affine so identity-scale data may be nonpositive.
    if (lambda == 1.0) return v - 1.0;
    return (std::pow(v, lambda) - 1.0) / lambda;
}

struct ComponentData {
    Eigen::MatrixXd design;              // I x k: [1 | covariates | outcome?]
    std::vector<Eigen::VectorXd> raw;    // reports of this component, per individual
    Eigen::VectorXd days;                // T_i
    double sum_log = 0.0;                // sum of log reports (positive data only)
    bool positive = true;
    int n_obs = 0;
};

ComponentData collect(const ExposurePanel& panel, int component, bool with_outcome) {
    const int n = panel.size();
    const int p = panel.n_covariates();
    ComponentData d;
    d.design.resize(n, 1 + p + (with_outcome ? 1 : 0));
    d.design.col(0).setOnes();
    d.raw.reserve(static_cast<std::size_t>(n));
    d.days.resize(n);

    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const Individual& ind = panel.individuals[static_cast<std::size_t>(i)];
        if (p > 0) d.design.block(i, 1, 1, p) = ind.covariates.transpose();
        if (with_outcome) {
            if (!ind.outcome)
                throw InputError("error model with outcome: individual " + ind.id +
                                 " has no outcome");
            d.design(i, 1 + p) = *ind.outcome;
        }
        Eigen::VectorXd col = ind.reports.col(component);
        d.days[i] = static_cast<double>(col.size());
        d.n_obs += static_cast<int>(col.size());
        for (Eigen::Index t = 0; t < col.size(); ++t) {
            const double v = col[t];
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
            if (v > 0.0) d.sum_log += std::log(v);
            else d.positive = false;
        }
        d.raw.push_back(std::move(col));
    }
    if (vmax - vmin <= 1e-12 * (1.0 + std::abs(vmax)))
        throw DegenerateModel("component " + std::to_string(component) +
                              ": all reports identical, variance degenerate");
    return d;
}

struct TransformedStats {
    Eigen::VectorXd zbar;  // per-individual transformed means
    double ssw_total = 0.0;
};

TransformedStats transform_stats(const ComponentData& d, double lambda) {
    const auto n = static_cast<Eigen::Index>(d.raw.size());
    TransformedStats s;
    s.zbar.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd& y = d.raw[static_cast<std::size_t>(i)];
        double mean = 0.0;
        for (Eigen::Index t = 0; t < y.size(); ++t) mean += transform_value(y[t], lambda);
        mean /= static_cast<double>(y.size());
        s.zbar[i] = mean;
        for (Eigen::Index t = 0; t < y.size(); ++t) {
            const double dev = transform_value(y[t], lambda) - mean;
            s.ssw_total += dev * dev;
        }
    }
    return s;
}

struct InnerFit {
    double loglik = -std::numeric_limits<double>::infinity();  // without Jacobian
    Eigen::VectorXd beta;
    double sigma2_eps = 0.0;
};

// Exact (beta, sigma2) profile given the variance ratio psi = sigma2_u /
// sigma2_eps. Compound symmetry collapses the GLS problem to weighted least
// squares on individual means with weights T_i / (1 + psi T_i), plus the
// pooled within-individual sum of squares.
InnerFit inner_fit(const ComponentData& d, const TransformedStats& s, double psi) {
    const Eigen::Index n = s.zbar.size();
    Eigen::VectorXd w(n);
    double log_det_extra = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double one_plus = 1.0 + psi * d.days[i];
        w[i] = d.days[i] / one_plus;
        log_det_extra += std::log(one_plus);
    }
    const Eigen::MatrixXd xw = d.design.transpose() * w.asDiagonal();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xw * d.design);
    if (ldlt.info() != Eigen::Success)
        throw DegenerateModel("error model: singular weighted design");
    InnerFit fit;
    fit.beta = ldlt.solve(xw * s.zbar);
    const Eigen::VectorXd resid = s.zbar - d.design * fit.beta;
    const double rss_between = (w.array() * resid.array().square()).sum();
    const double n_obs = static_cast<double>(d.n_obs);
    fit.sigma2_eps = (s.ssw_total + rss_between) / n_obs;
    if (!(fit.sigma2_eps > 0.0))
        throw DegenerateModel("error model: residual variance collapsed");
    fit.loglik = -0.5 * n_obs * (std::log(2.0 * std::numbers::pi * fit.sigma2_eps) + 1.0) -
                 0.5 * log_det_extra;
    return fit;
}

struct RatioFit {
    double psi = 0.0;
    InnerFit inner;
    bool capped = false;
};

// Maximizes the profile likelihood over psi >= 0: coarse log grid, then
// golden-section refinement in the bracketing interval.
RatioFit best_ratio(const ComponentData& d, const TransformedStats& s,
                    const MixedModelOptions& opts) {
    RatioFit out;
    if (opts.fixed_ratio) {
        out.psi = *opts.fixed_ratio;
        out.inner = inner_fit(d, s, out.psi);
        return out;
    }
    int budget = opts.max_ratio_iters;
    auto eval = [&](double psi) {
        --budget;
        return inner_fit(d, s, psi);
    };

    std::vector<double> grid{0.0};
    for (double e = -4.0; e <= 6.0 + 1e-9; e += 0.5) grid.push_back(std::pow(10.0, e));
    std::size_t best_idx = 0;
    std::vector<InnerFit> fits(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        fits[j] = eval(grid[j]);
        if (fits[j].loglik > fits[best_idx].loglik) best_idx = j;
    }
    out.psi = grid[best_idx];
    out.inner = fits[best_idx];

    double lo = grid[best_idx > 0 ? best_idx - 1 : 0];
    double hi = grid[std::min(best_idx + 1, grid.size() - 1)];
    if (lo == hi) return out;

    constexpr double invphi = 0.6180339887498949;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    InnerFit f1 = eval(x1), f2 = eval(x2);
    while (hi - lo > 1e-9 * (1.0 + (lo + hi) * 0.5)) {
        if (budget <= 0) {
            out.capped = true;
            break;
        }
        if (f1.loglik > f2.loglik) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = eval(x2);
        }
    }
    const InnerFit& better = (f1.loglik > f2.loglik) ? f1 : f2;
    if (better.loglik > out.inner.loglik) {
        out.psi = (f1.loglik > f2.loglik) ? x1 : x2;
        out.inner = better;
    }
    return out;
}

ErrorModelComponent pack(int component, bool with_outcome, double lambda,
                         const RatioFit& rf, double jacobian, int evals) {
    ErrorModelComponent c;
    c.component = component;
    c.lambda = lambda;
    c.beta0 = rf.inner.beta[0];
    c.beta = rf.inner.beta.tail(rf.inner.beta.size() - 1);
    c.sigma2_eps = rf.inner.sigma2_eps;
    c.sigma2_u = rf.psi * rf.inner.sigma2_eps;
    c.loglik = rf.inner.loglik + jacobian;
    c.with_outcome = with_outcome;
    c.lambda_evals = evals;
    return c;
}

} // namespace

ErrorModelComponent fit_component(const ExposurePanel& panel, int component,
                                  bool with_outcome, const MixedModelOptions& opts) {
    const bool identity_only = opts.fixed_lambda && *opts.fixed_lambda == 1.0;
    panel.validate(/*require_positive=*/!identity_only);
    if (component < 0 || component >= panel.n_components)
        throw std::invalid_argument("component index out of range");
    int repeated = 0;
    for (const auto& ind : panel.individuals)
        if (ind.days() >= 2) ++repeated;
    if (repeated < 2)
        throw std::invalid_argument(
            "error model needs at least 2 individuals with repeated reports");

    const ComponentData data = collect(panel, component, with_outcome);
    if (!identity_only && !data.positive)
        throw InputError("component " + std::to_string(component) +
                         ": nonpositive reports require fixed_lambda = 1");

    auto jacobian = [&](double lambda) {
        if (lambda == 1.0) return 0.0;
        return (lambda - 1.0) * data.sum_log;
    };

    if (opts.fixed_lambda) {
        const double lambda = *opts.fixed_lambda;
        if (!(lambda > 0.0)) throw std::invalid_argument("fixed_lambda must be > 0");
        const RatioFit rf = best_ratio(data, transform_stats(data, lambda), opts);
        ErrorModelComponent c = pack(component, with_outcome, lambda, rf, jacobian(lambda), 1);
        if (rf.capped)
            throw MixedModelConvergenceError("inner ratio search hit iteration cap", c);
        return c;
    }

    int evals = 0;
    struct Best {
        double lambda = 0.0;
        RatioFit rf;
        double loglik = -std::numeric_limits<double>::infinity();
    } best;
    bool capped = false;

    auto profile = [&](double lambda) {
        ++evals;
        RatioFit rf = best_ratio(data, transform_stats(data, lambda), opts);
        capped = capped || rf.capped;
        const double ll = rf.inner.loglik + jacobian(lambda);
        if (ll > best.loglik) best = {lambda, std::move(rf), ll};
        return ll;
    };

    const int g = std::max(opts.lambda_grid, 2);
    std::vector<double> lgrid(static_cast<std::size_t>(g));
    std::vector<double> lvals(static_cast<std::size_t>(g));
    std::size_t best_idx = 0;
    for (int j = 0; j < g; ++j) {
        lgrid[static_cast<std::size_t>(j)] =
            opts.lambda_lo + (opts.lambda_hi - opts.lambda_lo) * j / (g - 1.0);
        lvals[static_cast<std::size_t>(j)] = profile(lgrid[static_cast<std::size_t>(j)]);
        if (lvals[static_cast<std::size_t>(j)] > lvals[best_idx])
            best_idx = static_cast<std::size_t>(j);
    }

    double lo = lgrid[best_idx > 0 ? best_idx - 1 : 0];
    double hi = lgrid[std::min(best_idx + 1, lgrid.size() - 1)];
    constexpr double invphi = 0.6180339887498949;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    double f1 = profile(x1), f2 = profile(x2);
    while (hi - lo > 1e-7) {
        if (evals >= opts.max_lambda_evals) {
            capped = true;
            break;
        }
        if (f1 > f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = profile(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = profile(x2);
        }
    }

    ErrorModelComponent c = pack(component, with_outcome, best.lambda, best.rf,
                                 jacobian(best.lambda), evals);
    if (capped)
        throw MixedModelConvergenceError("lambda profile hit evaluation cap", c);
    return c;
}

ErrorModelFit fit_error_model(const ExposurePanel& panel, bool with_outcome,
                              const MixedModelOptions& opts) {
    ErrorModelFit fit;
    fit.with_outcome = with_outcome;
    fit.components.reserve(static_cast<std::size_t>(panel.n_components));
    for (int m = 0; m < panel.n_components; ++m)
        fit.components.push_back(fit_component(panel, m, with_outcome, opts));
    return fit;
}

double blup_transformed(const ErrorModelComponent& comp, const Individual& ind,
                        BlupMode mode) {
    const int t = ind.days();
    if (t < 1) throw std::invalid_argument("blup_transformed: individual has no reports");
    double fixed = comp.beta0;
    const Eigen::Index p = ind.covariates.size();
    const Eigen::Index expect = p + (comp.with_outcome ? 1 : 0);
    if (comp.beta.size() != expect)
        throw std::invalid_argument("blup_transformed: fit/individual covariate mismatch");
    if (p > 0) fixed += comp.beta.head(p).dot(ind.covariates);
    if (comp.with_outcome) {
        if (!ind.outcome)
            throw std::invalid_argument("blup_transformed: outcome required by this fit");
        fixed += comp.beta[comp.beta.size() - 1] * (*ind.outcome);
    }
    double zbar = 0.0;
    for (int tt = 0; tt < t; ++tt)
        zbar += transform_value(ind.reports(tt, comp.component), comp.lambda);
    zbar /= static_cast<double>(t);

    double w_fixed;
    if (mode == BlupMode::paper) {
        w_fixed = (comp.sigma2_u + comp.sigma2_eps > 0.0)
                      ? comp.sigma2_u / (comp.sigma2_u + comp.sigma2_eps)
                      : 1.0;
    } else {
        const double per_mean = comp.sigma2_eps / static_cast<double>(t);
        w_fixed = (comp.sigma2_u + per_mean > 0.0)
                      ? per_mean / (comp.sigma2_u + per_mean)
                      : 1.0;
    }
    return w_fixed * fixed + (1.0 - w_fixed) * zbar;
}

double component_profile_loglik(const ExposurePanel& panel, int component,
                                bool with_outcome, double lambda, double ratio) {
    const ComponentData data = collect(panel, component, with_outcome);
    if (!data.positive && lambda != 1.0)
        throw InputError("profile log-likelihood needs positive data for lambda != 1");
    const TransformedStats stats = transform_stats(data, lambda);
    const InnerFit inner = inner_fit(data, stats, ratio);
    const double jac = (lambda == 1.0) ? 0.0 : (lambda - 1.0) * data.sum_log;
    return inner.loglik + jac;
}

double component_profile_loglik(const ExposurePanel& panel, int component,
                                bool with_outcome, double lambda) {
    const ComponentData data = collect(panel, component, with_outcome);
    if (!data.positive && lambda != 1.0)
        throw InputError("profile log-likelihood needs positive data for lambda != 1");
    const TransformedStats stats = transform_stats(data, lambda);
    const RatioFit rf = best_ratio(data, stats, MixedModelOptions{});
    const double jac = (lambda == 1.0) ? 0.0 : (lambda - 1.0) * data.sum_log;
    return rf.inner.loglik + jac;
}

} // namespace mecluster
