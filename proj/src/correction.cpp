#include "mecluster/correction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mecluster/boxcox.hpp"
#include "mecluster/errors.hpp"
#include "mecluster/parallel.hpp"
#include "mecluster/rng.hpp"

namespace mecluster {

namespace {

// Stream tags; stable across versions, never renumber.
constexpr std::uint64_t kClusterStageTag = 11;
constexpr std::uint64_t kDrawTag = 12;

// Tags identifying which stage-1 estimates a classifier was trained on.
// naive means are shared between the naive method and SIMEX (which freezes
// the naive solution), so they use the same tag.
constexpr std::uint64_t kEstimatorNaive = 1;
constexpr std::uint64_t kEstimatorNci = 2;
constexpr std::uint64_t kEstimatorNciOutcome = 3;
constexpr std::uint64_t kEstimatorNciNull = 4;

bool identity_mode(const CorrectionOptions& opts) {
    return opts.mixed.fixed_lambda && *opts.mixed.fixed_lambda == 1.0;
}

void check_panel(const ExposurePanel& panel, const CorrectionOptions& opts) {
    panel.validate(/*require_positive=*/!identity_mode(opts));
    if (!panel.outcomes_complete())
        throw InputError("correction pipelines need an outcome for every individual");
    if (opts.fixed_cutoff && panel.n_components != 1)
        throw std::invalid_argument("fixed-cutoff classification needs exactly one component");
    if (opts.n_clusters < 2 && !opts.fixed_cutoff)
        throw std::invalid_argument("correction needs n_clusters >= 2");
}

Classifier train_classifier(const Eigen::MatrixXd& estimates, const CorrectionOptions& opts,
                            std::uint64_t estimator_tag) {
    if (opts.fixed_cutoff) return Classifier::fixed_cutoff(*opts.fixed_cutoff);
    const std::uint64_t seed = RngStream::key(opts.seed, {kClusterStageTag, estimator_tag});
    ClusterModel model = (opts.cluster_method == ClusterMethod::kmeans)
                             ? fit_kmeans(estimates, opts.n_clusters, seed, opts.cluster)
                             : fit_gmm(estimates, opts.n_clusters, seed, opts.cluster);
    return Classifier::from_model(std::move(model));
}

int cluster_count(const CorrectionOptions& opts) {
    return opts.fixed_cutoff ? 2 : opts.n_clusters;
}

Eigen::VectorXd pack_coefs(const HealthFit& fit) {
    Eigen::VectorXd theta(1 + fit.cluster_effects.size() + fit.covariate_coefs.size());
    theta[0] = fit.intercept;
    theta.segment(1, fit.cluster_effects.size()) = fit.cluster_effects;
    if (fit.covariate_coefs.size() > 0)
        theta.tail(fit.covariate_coefs.size()) = fit.covariate_coefs;
    return theta;
}

HealthFit unpack_coefs(const Eigen::VectorXd& theta, HealthModelKind kind, int n_clusters,
                       Eigen::Index n_covariates) {
    HealthFit fit;
    fit.kind = kind;
    fit.n_clusters = n_clusters;
    fit.intercept = theta[0];
    fit.cluster_effects = theta.segment(1, n_clusters - 1);
    fit.covariate_coefs =
        n_covariates > 0 ? Eigen::VectorXd(theta.tail(n_covariates)) : Eigen::VectorXd();
    return fit;
}

const Eigen::MatrixXd& naive_means(const ExposurePanel& panel, PipelineCache& cache) {
    if (!cache.naive_means) cache.naive_means = panel.report_means();
    return *cache.naive_means;
}

const Classifier& naive_classifier(const ExposurePanel& panel, const CorrectionOptions& opts,
                                   PipelineCache& cache) {
    if (!cache.naive_classifier)
        cache.naive_classifier =
            train_classifier(naive_means(panel, cache), opts, kEstimatorNaive);
    return *cache.naive_classifier;
}

const ErrorModelFit& error_fit(const ExposurePanel& panel, const CorrectionOptions& opts,
                               bool with_outcome, PipelineCache& cache) {
    auto& slot = with_outcome ? cache.fit_outcome : cache.fit_plain;
    if (!slot) slot = fit_error_model(panel, with_outcome, opts.mixed);
    return *slot;
}

// Back-transform boundary value used when clamping failed draws: the lowest
// representable positive exposure for this lambda.
double clamped_inverse(double lambda) { return std::pow(lambda * 1e-9, 1.0 / lambda); }

// Maps the (C-1) cluster effects to all pairwise contrasts; row per pair.
Eigen::MatrixXd contrast_map(int n_clusters) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(ContrastSet::pair_count(n_clusters),
                                              n_clusters - 1);
    for (int c = 1; c <= n_clusters; ++c)
        for (int cp = c + 1; cp <= n_clusters; ++cp) {
            const int row = ContrastSet::pair_index(c, cp, n_clusters);
            a(row, cp - 2) += 1.0;
            if (c > 1) a(row, c - 2) -= 1.0;
        }
    return a;
}

} // namespace

std::string method_name(CorrectionMethod method) {
    switch (method) {
        case CorrectionMethod::naive: return "naive";
        case CorrectionMethod::rc: return "rc";
        case CorrectionMethod::simex: return "simex";
        case CorrectionMethod::mi: return "mi";
        case CorrectionMethod::mi_null: return "mi_null";
    }
    throw std::invalid_argument("unknown correction method");
}

std::uint64_t method_stream_id(CorrectionMethod method) {
    switch (method) {
        case CorrectionMethod::naive: return 1;
        case CorrectionMethod::rc: return 2;
        case CorrectionMethod::simex: return 3;
        case CorrectionMethod::mi: return 4;
        case CorrectionMethod::mi_null: return 5;
    }
    throw std::invalid_argument("unknown correction method");
}

CorrectionResult correct_naive(const ExposurePanel& panel, const CorrectionOptions& opts,
                               PipelineCache* cache) {
    check_panel(panel, opts);
    PipelineCache local;
    PipelineCache& c = cache ? *cache : local;

    CorrectionResult res;
    res.method = CorrectionMethod::naive;
    res.classifier = naive_classifier(panel, opts, c);
    res.memberships = res.classifier.classify_all(naive_means(panel, c));
    res.health = fit_health_model(opts.health_kind, panel.outcome_vector(),
                                  res.memberships, panel.covariate_matrix(),
                                  cluster_count(opts));
    res.contrasts = expand_contrasts(res.health);
    return res;
}

CorrectionResult correct_rc(const ExposurePanel& panel, const CorrectionOptions& opts,
                            PipelineCache* cache) {
    check_panel(panel, opts);
    PipelineCache local;
    PipelineCache& c = cache ? *cache : local;

    CorrectionResult res;
    res.method = CorrectionMethod::rc;
    const ErrorModelFit& fit = error_fit(panel, opts, /*with_outcome=*/false, c);
    const Eigen::MatrixXd estimates =
        estimate_usual(fit, panel, opts.blup_mode, &res.diagnostics.nci);
    res.classifier = train_classifier(estimates, opts, kEstimatorNci);
    res.memberships = res.classifier.classify_all(estimates);
    res.health = fit_health_model(opts.health_kind, panel.outcome_vector(),
                                  res.memberships, panel.covariate_matrix(),
                                  cluster_count(opts));
    res.contrasts = expand_contrasts(res.health);
    return res;
}

double solve_corrective_mu(double ybar_orig, double ybar_transformed, double lambda,
                           double zeta, double sigma2_eps, int days, bool* used_fallback) {
    if (used_fallback) *used_fallback = false;
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_corrective_mu: lambda must be > 0");
    if (!(zeta > 0.0)) throw std::invalid_argument("solve_corrective_mu: zeta must be > 0");
    if (sigma2_eps < 0.0) throw std::invalid_argument("solve_corrective_mu: negative variance");
    if (days < 1) throw std::invalid_argument("solve_corrective_mu: days must be >= 1");

    if (std::abs(lambda - 1.0) <= 1e-12) return 0.0;
    // Log-transform limit; the empirical equation degenerates as lambda -> 0
    // but the exact solution is available.
    if (lambda <= 1e-3) return -0.5 * zeta * sigma2_eps;

    const double s2 = zeta * sigma2_eps;
    const double inv_lambda = 1.0 / lambda;
    auto f = [&](double mu) {
        const double base = lambda * (ybar_transformed + mu) + 1.0;
        return std::pow(base, inv_lambda) +
               0.5 * (1.0 - lambda) * std::pow(base, inv_lambda - 2.0) * s2 - ybar_orig;
    };
    const double domain_lo = -inv_lambda - ybar_transformed;  // base > 0 boundary

    auto bisect = [&](double lo, double hi) {
        double flo = f(lo);
        for (int iter = 0; iter < 200; ++iter) {
            const double mid = 0.5 * (lo + hi);
            const double fmid = f(mid);
            if (std::abs(fmid) <= 1e-10 * std::max(1.0, std::abs(ybar_orig)) ||
                hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                               (1.0 + std::abs(mid)))
                return mid;
            if ((flo < 0.0) == (fmid < 0.0)) {
                lo = mid;
                flo = fmid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    };

    // Primary bracket on the side the sign of (1 - lambda) predicts, then
    // the mirrored side; both bounded away from the transform boundary.
    const double edge = domain_lo + 1e-12 * (1.0 + std::abs(domain_lo));
    double neg_lo = std::max(-0.5 * s2, edge);
    const double f0 = f(0.0);
    for (int expand = 0; expand < 8; ++expand) {
        if (neg_lo < 0.0 && (f(neg_lo) < 0.0) != (f0 < 0.0)) {
            const double root = bisect(neg_lo, 0.0);
            return root;
        }
        const double wider = std::max(neg_lo * 2.0, edge);
        if (wider == neg_lo) break;
        neg_lo = wider;
    }
    double pos_hi = 0.5 * s2;
    for (int expand = 0; expand < 8; ++expand) {
        if ((f(pos_hi) < 0.0) != (f0 < 0.0)) return bisect(0.0, pos_hi);
        pos_hi *= 2.0;
    }

    if (used_fallback) *used_fallback = true;
    return -0.5 * zeta * sigma2_eps * (1.0 - lambda);
}

double simex_extrapolate(const std::vector<double>& zetas,
                         const std::vector<double>& values, int degree, double at) {
    if (zetas.size() != values.size())
        throw std::invalid_argument("simex_extrapolate: size mismatch");
    if (degree < 1 || zetas.size() < static_cast<std::size_t>(degree) + 1)
        throw std::invalid_argument("simex_extrapolate: need at least degree+1 points");
    const auto n = static_cast<Eigen::Index>(zetas.size());
    Eigen::MatrixXd v(n, degree + 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (int d = 0; d <= degree; ++d) {
            v(i, d) = p;
            p *= zetas[static_cast<std::size_t>(i)];
        }
        y[i] = values[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd coef = v.colPivHouseholderQr().solve(y);
    double out = coef[degree];
    for (int d = degree - 1; d >= 0; --d) out = out * at + coef[d];
    return out;
}

std::vector<CorrectionResult> correct_simex(const ExposurePanel& panel,
                                            const CorrectionOptions& opts,
                                            PipelineCache* cache) {
    check_panel(panel, opts);
    const SimexOptions& sx = opts.simex;
    if (sx.replicates < 2) throw std::invalid_argument("simex needs at least 2 replicates");
    if (sx.zeta_grid.empty()) throw std::invalid_argument("simex zeta grid empty");
    for (double z : sx.zeta_grid)
        if (!(z > 0.0)) throw std::invalid_argument("simex zeta values must be > 0");
    if (sx.degrees.empty()) throw std::invalid_argument("simex needs an extrapolation degree");
    for (int d : sx.degrees)
        if (d < 2 || d > 4)
            throw std::invalid_argument("simex extrapolation degree must be in 2..4");

    PipelineCache local;
    PipelineCache& c = cache ? *cache : local;

    const CorrectionResult naive = correct_naive(panel, opts, &c);
    const ErrorModelFit& fit = error_fit(panel, opts, /*with_outcome=*/false, c);
    const std::uint64_t frozen_hash = naive.classifier.content_hash();

    const int n = panel.size();
    const int m_comp = panel.n_components;
    const int n_zeta = static_cast<int>(sx.zeta_grid.size());
    const int reps = sx.replicates;
    const Eigen::VectorXd outcome = panel.outcome_vector();
    const Eigen::MatrixXd covariates = panel.covariate_matrix();
    const int n_clusters = cluster_count(opts);

    // Transformed reports, computed once.
    std::vector<std::vector<Eigen::VectorXd>> trans(
        static_cast<std::size_t>(m_comp));
    Eigen::MatrixXd trans_mean(n, m_comp);
    for (int m = 0; m < m_comp; ++m) {
        const double lambda = fit.components[static_cast<std::size_t>(m)].lambda;
        auto& per_ind = trans[static_cast<std::size_t>(m)];
        per_ind.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd col =
                panel.individuals[static_cast<std::size_t>(i)].reports.col(m);
            Eigen::VectorXd z(col.size());
            for (Eigen::Index t = 0; t < col.size(); ++t)
                z[t] = (lambda == 1.0) ? col[t] - 1.0
                                       : (std::pow(col[t], lambda) - 1.0) / lambda;
            trans_mean(i, m) = z.mean();
            per_ind.push_back(std::move(z));
        }
    }

    // Corrective means per (zeta, individual, component), cached across
    // replicates.
    const Eigen::MatrixXd& means = naive_means(panel, c);
    std::vector<Eigen::MatrixXd> mu(static_cast<std::size_t>(n_zeta));
    int mu_fallbacks = 0;
    for (int zi = 0; zi < n_zeta; ++zi) {
        const double zeta = sx.zeta_grid[static_cast<std::size_t>(zi)];
        Eigen::MatrixXd& mz = mu[static_cast<std::size_t>(zi)];
        mz.resize(n, m_comp);
        for (int m = 0; m < m_comp; ++m) {
            const auto& comp = fit.components[static_cast<std::size_t>(m)];
            for (int i = 0; i < n; ++i) {
                bool fb = false;
                mz(i, m) = solve_corrective_mu(
                    means(i, m), trans_mean(i, m), comp.lambda, zeta, comp.sigma2_eps,
                    panel.individuals[static_cast<std::size_t>(i)].days(), &fb);
                if (fb) ++mu_fallbacks;
            }
        }
    }

    const int n_items = n_zeta * reps;
    std::vector<std::optional<Eigen::VectorXd>> thetas(static_cast<std::size_t>(n_items));
    std::vector<int> redraws(static_cast<std::size_t>(n_items), 0);
    std::vector<int> clamps(static_cast<std::size_t>(n_items), 0);

    parallel_for(n_items, opts.workers, [&](int item) {
        const int zi = item / reps;
        const int l = item % reps;
        const double zeta = sx.zeta_grid[static_cast<std::size_t>(zi)];
        Eigen::MatrixXd noisy(n, m_comp);
        for (int m = 0; m < m_comp; ++m) {
            const auto& comp = fit.components[static_cast<std::size_t>(m)];
            const double sd = std::sqrt(zeta * comp.sigma2_eps);
            const double lambda = comp.lambda;
            RngStream st = RngStream::substream(
                opts.seed, {method_stream_id(CorrectionMethod::simex), kDrawTag,
                            static_cast<std::uint64_t>(zi + 1),
                            static_cast<std::uint64_t>(l + 1),
                            static_cast<std::uint64_t>(m + 1)});
            for (int i = 0; i < n; ++i) {
                const Eigen::VectorXd& z = trans[static_cast<std::size_t>(m)]
                                                [static_cast<std::size_t>(i)];
                const double mu_im = mu[static_cast<std::size_t>(zi)](i, m);
                double acc = 0.0;
                for (Eigen::Index t = 0; t < z.size(); ++t) {
                    const double zt = z[t] + st.normal(mu_im, sd);
                    if (lambda == 1.0) {
                        acc += zt + 1.0;
                        continue;
                    }
                    auto val = boxcox::try_inverse(zt, lambda);
                    if (!val) {
                        ++redraws[static_cast<std::size_t>(item)];
                        val = boxcox::try_inverse(z[t] + st.normal(mu_im, sd), lambda);
                        if (!val) {
                            ++clamps[static_cast<std::size_t>(item)];
                            val = clamped_inverse(lambda);
                        }
                    }
                    acc += *val;
                }
                noisy(i, m) = acc / static_cast<double>(z.size());
            }
        }
        // Added noise widens the means; per-matrix standardization keeps the
        // frozen boundaries meaningful at every zeta.
        const Eigen::VectorXi labels = naive.classifier.classify_all_rescaled(noisy);
        try {
            const HealthFit hf = fit_health_model(opts.health_kind, outcome, labels,
                                                  covariates, n_clusters);
            thetas[static_cast<std::size_t>(item)] = pack_coefs(hf);
        } catch (const Error&) {
            // failed replicate, counted below
        }
    });

    if (naive.classifier.content_hash() != frozen_hash)
        throw Error("simex: frozen classifier drifted during replicates");

    CorrectionDiagnostics diag;
    diag.nci = naive.diagnostics.nci;
    diag.corrective_mu_fallbacks = mu_fallbacks;
    for (int item = 0; item < n_items; ++item) {
        diag.untransformable_redraws += redraws[static_cast<std::size_t>(item)];
        diag.untransformable_clamped += clamps[static_cast<std::size_t>(item)];
    }

    const Eigen::VectorXd theta0 = pack_coefs(naive.health);
    SimexPoint anchor;
    anchor.zeta = 0.0;
    anchor.coefs = theta0;
    anchor.replicates_used = 0;
    diag.simex_points.push_back(anchor);
    std::vector<double> xs{0.0};
    std::vector<Eigen::VectorXd> ys{theta0};
    for (int zi = 0; zi < n_zeta; ++zi) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(theta0.size());
        int used = 0;
        for (int l = 0; l < reps; ++l) {
            const auto& th = thetas[static_cast<std::size_t>(zi * reps + l)];
            if (th) {
                sum += *th;
                ++used;
            }
        }
        const int failed = reps - used;
        diag.simex_failed_replicates += failed;
        if (2 * failed > reps)
            throw FailedClassification(
                "simex: more than half of the replicates failed at zeta = " +
                std::to_string(sx.zeta_grid[static_cast<std::size_t>(zi)]));
        SimexPoint pt;
        pt.zeta = sx.zeta_grid[static_cast<std::size_t>(zi)];
        pt.coefs = sum / static_cast<double>(used);
        pt.replicates_used = used;
        diag.simex_points.push_back(pt);
        xs.push_back(pt.zeta);
        ys.push_back(pt.coefs);
    }

    std::vector<CorrectionResult> out;
    out.reserve(sx.degrees.size());
    for (int degree : sx.degrees) {
        Eigen::VectorXd extrapolated(theta0.size());
        for (Eigen::Index k = 0; k < theta0.size(); ++k) {
            std::vector<double> vals(xs.size());
            for (std::size_t j = 0; j < xs.size(); ++j) vals[j] = ys[j][k];
            extrapolated[k] = simex_extrapolate(xs, vals, degree, -1.0);
        }
        CorrectionResult res;
        res.method = CorrectionMethod::simex;
        res.simex_degree = degree;
        res.classifier = naive.classifier;
        res.memberships = naive.memberships;
        res.health = unpack_coefs(extrapolated, opts.health_kind, n_clusters,
                                  covariates.cols());
        res.contrasts = expand_contrasts(res.health);
        res.diagnostics = diag;
        out.push_back(std::move(res));
    }
    return out;
}

CorrectionResult correct_mi(const ExposurePanel& panel, const CorrectionOptions& opts,
                            bool include_outcome, PipelineCache* cache) {
    check_panel(panel, opts);
    if (opts.imputations < 1) throw std::invalid_argument("mi needs at least 1 imputation");
    PipelineCache local;
    PipelineCache& c = cache ? *cache : local;

    CorrectionResult res;
    res.method = include_outcome ? CorrectionMethod::mi : CorrectionMethod::mi_null;
    const std::uint64_t mid = method_stream_id(res.method);

    const ErrorModelFit& fit = error_fit(panel, opts, include_outcome, c);
    const Eigen::MatrixXd estimates =
        estimate_usual(fit, panel, opts.blup_mode, &res.diagnostics.nci);
    res.classifier = train_classifier(
        estimates, opts, include_outcome ? kEstimatorNciOutcome : kEstimatorNciNull);
    res.memberships = res.classifier.classify_all(estimates);
    const std::uint64_t frozen_hash = res.classifier.content_hash();

    const int n = panel.size();
    const int m_comp = panel.n_components;
    const Eigen::VectorXd outcome = panel.outcome_vector();
    const Eigen::MatrixXd covariates = panel.covariate_matrix();
    const int n_clusters = cluster_count(opts);

    Eigen::MatrixXd blups(n, m_comp);
    for (int m = 0; m < m_comp; ++m)
        for (int i = 0; i < n; ++i)
            blups(i, m) = blup_transformed(fit.components[static_cast<std::size_t>(m)],
                                           panel.individuals[static_cast<std::size_t>(i)],
                                           opts.blup_mode);

    const int reps = opts.imputations;
    std::vector<std::optional<Eigen::VectorXd>> thetas(static_cast<std::size_t>(reps));
    std::vector<Eigen::VectorXd> contrast_draws(static_cast<std::size_t>(reps));
    std::vector<double> within_traces(static_cast<std::size_t>(reps), 0.0);
    std::vector<int> redraws(static_cast<std::size_t>(reps), 0);
    std::vector<int> clamps(static_cast<std::size_t>(reps), 0);
    const Eigen::MatrixXd cmap = contrast_map(n_clusters);

    parallel_for(reps, opts.workers, [&](int l) {
        Eigen::MatrixXd imputed(n, m_comp);
        for (int m = 0; m < m_comp; ++m) {
            const auto& comp = fit.components[static_cast<std::size_t>(m)];
            const double sd = std::sqrt(comp.sigma2_eps);
            RngStream st = RngStream::substream(
                opts.seed, {mid, kDrawTag, static_cast<std::uint64_t>(l + 1),
                            static_cast<std::uint64_t>(m + 1)});
            for (int i = 0; i < n; ++i) {
                double value;
                if (comp.lambda == 1.0) {
                    value = blups(i, m) + st.normal(0.0, sd) + 1.0;
                } else {
                    std::optional<double> val;
                    for (int attempt = 0; attempt < 6 && !val; ++attempt) {
                        if (attempt > 0) ++redraws[static_cast<std::size_t>(l)];
                        val = boxcox::try_inverse(blups(i, m) + st.normal(0.0, sd),
                                                  comp.lambda);
                    }
                    if (!val) {
                        ++clamps[static_cast<std::size_t>(l)];
                        val = clamped_inverse(comp.lambda);
                    }
                    value = *val;
                }
                imputed(i, m) = value;
            }
        }
        // Imputation noise widens the draws relative to the conditional-mean
        // training cloud, so each imputed matrix is standardized by its own
        // moments.
        const Eigen::VectorXi labels = res.classifier.classify_all_rescaled(imputed);
        try {
            const HealthFit hf = fit_health_model(opts.health_kind, outcome, labels,
                                                  covariates, n_clusters);
            thetas[static_cast<std::size_t>(l)] = pack_coefs(hf);
            contrast_draws[static_cast<std::size_t>(l)] = cmap * hf.cluster_effects;
            within_traces[static_cast<std::size_t>(l)] =
                (cmap * hf.effect_vcov * cmap.transpose()).trace();
        } catch (const Error&) {
            // dropped imputation, counted below
        }
    });

    if (res.classifier.content_hash() != frozen_hash)
        throw Error("mi: frozen classifier drifted during imputations");

    Eigen::VectorXd sum;
    int used = 0;
    for (int l = 0; l < reps; ++l) {
        const auto& th = thetas[static_cast<std::size_t>(l)];
        if (!th) continue;
        if (used == 0) sum = Eigen::VectorXd::Zero(th->size());
        sum += *th;
        ++used;
        res.diagnostics.untransformable_redraws += redraws[static_cast<std::size_t>(l)];
        res.diagnostics.untransformable_clamped += clamps[static_cast<std::size_t>(l)];
    }
    const int dropped = reps - used;
    res.diagnostics.mi_dropped_imputations = dropped;
    res.diagnostics.n_imputations_used = used;
    if (5 * dropped > reps)
        throw FailedClassification("mi: more than 20% of imputations dropped (" +
                                   std::to_string(dropped) + " of " +
                                   std::to_string(reps) + ")");

    const Eigen::VectorXd theta_bar = sum / static_cast<double>(used);
    res.health = unpack_coefs(theta_bar, opts.health_kind, n_clusters, covariates.cols());
    res.contrasts = expand_contrasts(res.health);

    // Rubin decomposition over the retained imputations, logged only.
    Eigen::VectorXd cmean = Eigen::VectorXd::Zero(cmap.rows());
    double within = 0.0;
    for (int l = 0; l < reps; ++l) {
        if (!thetas[static_cast<std::size_t>(l)]) continue;
        cmean += contrast_draws[static_cast<std::size_t>(l)];
        within += within_traces[static_cast<std::size_t>(l)];
    }
    cmean /= static_cast<double>(used);
    within /= static_cast<double>(used);
    double between = 0.0;
    if (used > 1) {
        for (int l = 0; l < reps; ++l) {
            if (!thetas[static_cast<std::size_t>(l)]) continue;
            between += (contrast_draws[static_cast<std::size_t>(l)] - cmean).squaredNorm();
        }
        between /= static_cast<double>(used - 1);
    }
    res.diagnostics.rubin_between_trace = between;
    res.diagnostics.rubin_within_trace = within;
    return res;
}

} // namespace mecluster
