#include "mecluster/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mecluster/boxcox.hpp"
#include "mecluster/errors.hpp"
#include "mecluster/measures.hpp"
#include "mecluster/parallel.hpp"
#include "mecluster/rng.hpp"

namespace mecluster {

namespace {

// Generation stream tags; stable, never renumber.
constexpr std::uint64_t kGenTag = 31;
constexpr std::uint64_t kSimpleGenTag = 32;
constexpr std::uint64_t kCorrSeedTag = 35;
constexpr std::uint64_t kSimpleCorrSeedTag = 36;
constexpr std::uint64_t kGoldTag = 13;
constexpr std::uint64_t kImputeTag = 99;

// Purposes within one dataset's generation streams.
constexpr std::uint64_t kPurposeCovariates = 1;
constexpr std::uint64_t kPurposeU = 2;
constexpr std::uint64_t kPurposeOutcomeA = 3;
constexpr std::uint64_t kPurposeOutcomeB = 4;
constexpr std::uint64_t kBatchReports = 10;
constexpr std::uint64_t kBatchTruth = 11;
constexpr std::uint64_t kBatchGoldBase = 12;

constexpr int kTruthDays = 1000;

double quantile_type7(const std::vector<double>& sorted, double p) {
    const auto n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw InputError(std::string(what) + " matrix is not positive definite");
    return llt.matrixL();
}

Eigen::VectorXd dichotomize_at_90th(const Eigen::VectorXd& h) {
    const int n = static_cast<int>(h.size());
    const int cases = n / 10;
    std::vector<double> sorted(h.data(), h.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double cutoff = sorted[static_cast<std::size_t>(n - cases - 1)];
    Eigen::VectorXd cat(n);
    for (int i = 0; i < n; ++i) cat[i] = h[i] > cutoff ? 1.0 : 0.0;
    return cat;
}

struct DatasetRow {
    bool ok = false;
    double mr = 0.0, ari = 0.0, dbar = 0.0, dmax = 0.0, drel = 0.0;
    int rel_excl = 0;
};

MethodSummary summarize(const std::string& name, const std::vector<DatasetRow>& rows) {
    MethodSummary ms;
    ms.method = name;
    std::vector<double> mrs, aris, dbars, dmaxs, drels;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        mrs.push_back(r.mr);
        aris.push_back(r.ari);
        dbars.push_back(r.dbar);
        dmaxs.push_back(r.dmax);
        drels.push_back(r.drel);
        ms.rel_pairs_excluded += r.rel_excl;
    }
    ms.n_used = static_cast<int>(mrs.size());
    ms.n_failed = static_cast<int>(rows.size()) - ms.n_used;
    if (ms.n_used > 0) {
        ms.mr = mean(mrs);
        ms.ari = mean(aris);
        ms.mean_abs_bias = mean(dbars);
        ms.max_abs_bias = mean(dmaxs);
        ms.med_rel_bias = lower_median(std::move(drels));
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        ms.mr = ms.ari = ms.mean_abs_bias = ms.max_abs_bias = ms.med_rel_bias = nan;
    }
    return ms;
}

} // namespace

void ScenarioParams::validate(int m_components) const {
    const auto m = static_cast<Eigen::Index>(m_components);
    if (lambda.size() != m || beta0.size() != m || sigma2_u.size() != m ||
        sigma2_eps.size() != m)
        throw InputError("scenario params: component tables must have length M");
    for (Eigen::Index k = 0; k < m; ++k) {
        if (!(lambda[k] > 0.0)) throw InputError("scenario params: lambda must be > 0");
        if (sigma2_u[k] < 0.0 || sigma2_eps[k] < 0.0)
            throw InputError("scenario params: negative variance");
    }
    const Eigen::Index p = cov_mean.size();
    if (beta.rows() != m || beta.cols() != p)
        throw InputError("scenario params: beta must be M x p");
    if (cov_cov.rows() != p || cov_cov.cols() != p)
        throw InputError("scenario params: covariate covariance must be p x p");
    if (u_corr.rows() != m || u_corr.cols() != m)
        throw InputError("scenario params: random-effect correlation must be M x M");
    if (a_alpha_x.size() != p || b_alpha_x.size() != p)
        throw InputError("scenario params: outcome covariate coefficients must have length p");
    if (a_alpha_y.size() != m || b_alpha_y.size() != m || b_alpha_ybar.size() != m)
        throw InputError("scenario params: outcome exposure coefficients must have length M");
    if (!(a_sigma > 0.0) || !(b_sigma > 0.0))
        throw InputError("scenario params: outcome error sd must be > 0");
}

ScenarioParams default_scenario_params(int m_components) {
    if (m_components != 5 && m_components != 9)
        throw std::invalid_argument("default scenario params exist for 5 or 9 components");
    const int m = m_components;

    static const double lambda9[] = {0.36, 0.39, 1.53, 0.30, 0.76, 0.38, 0.39, 0.48, 0.30};
    static const double beta09[] = {25.5, 26.8, 25.4, -0.26, 3.00, 10.3, 8.99, 56.4, 28.1};
    static const double beta9[9][3] = {
        {-0.48, -0.62, 0.35},  {-0.11, -0.51, 0.39}, {0.07, -0.33, -0.07},
        {0.10, 0.08, 0.15},    {-0.04, -0.07, 0.10}, {-0.20, -0.25, 0.39},
        {0.02, -0.17, 0.19},   {-0.12, -0.35, -1.15}, {-0.11, -0.30, -0.03}};
    static const double su9[] = {8.9, 10.5, 10.8, 0.17, 0.11, 1.1, 2.5, 65.5, 4.4};
    static const double se9[] = {38.1, 51.0, 47.5, 0.55, 0.38, 10.3, 13.4, 194.6, 11.3};
    static const double ucorr9[9][9] = {
        {1, 0.05, 0.29, -0.03, 0.28, 0.93, 0.03, 0.27, 0.42},
        {0.05, 1, 0.23, -0.2, 0.29, 0.03, 0.85, 0.54, 0.64},
        {0.29, 0.23, 1, -0.46, 0.44, 0.28, 0.18, 0.16, 0.23},
        {-0.03, -0.2, -0.46, 1, -0.31, -0.02, -0.15, -0.11, -0.15},
        {0.28, 0.29, 0.44, -0.31, 1, 0.28, 0.26, 0.29, 0.4},
        {0.93, 0.03, 0.28, -0.02, 0.28, 1, 0.03, 0.28, 0.38},
        {0.03, 0.85, 0.18, -0.15, 0.26, 0.03, 1, 0.45, 0.52},
        {0.27, 0.54, 0.16, -0.11, 0.29, 0.28, 0.45, 1, 0.84},
        {0.42, 0.64, 0.23, -0.15, 0.4, 0.38, 0.52, 0.84, 1}};

    ScenarioParams pr;
    pr.lambda = Eigen::Map<const Eigen::VectorXd>(lambda9, m);
    pr.beta0 = Eigen::Map<const Eigen::VectorXd>(beta09, m);
    pr.sigma2_u = Eigen::Map<const Eigen::VectorXd>(su9, m);
    pr.sigma2_eps = Eigen::Map<const Eigen::VectorXd>(se9, m);
    pr.beta.resize(m, 3);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < 3; ++j) pr.beta(k, j) = beta9[k][j];
    pr.u_corr.resize(m, m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) pr.u_corr(k, j) = ucorr9[k][j];

    pr.cov_mean.resize(3);
    pr.cov_mean << 12.0, 0.5, 0.5;
    pr.cov_cov.resize(3, 3);
    pr.cov_cov << 3.8, 0.0, 0.0, 0.0, 1.2, -0.1, 0.0, -0.1, 0.2;

    if (m == 5) {
        pr.a_alpha0 = 0.5728;
        pr.a_alpha_x.resize(3);
        pr.a_alpha_x << -0.0021, -0.0058, 0.0316;
        pr.a_alpha_y.resize(5);
        pr.a_alpha_y << 3.00e-4, -8.00e-4, -0.0218, -0.0751, 0.0301;
        pr.a_sigma = 0.9872;
        pr.b_alpha0 = 0.6949;
        pr.b_alpha_x.resize(3);
        pr.b_alpha_x << 0.0644, -0.0512, 0.0659;
        pr.b_alpha_y.resize(5);
        pr.b_alpha_y << 5.00e-4, -4.00e-4, -0.337, -0.2695, 0.7173;
        pr.b_alpha_ybar.resize(5);
        pr.b_alpha_ybar << -1.00e-4, -1.00e-4, 0.0813, 0.06, -0.2353;
        pr.b_sigma = 0.9862;
    } else {
        pr.a_alpha0 = 0.5464;
        pr.a_alpha_x.resize(3);
        pr.a_alpha_x << -0.002, -0.0221, 0.0307;
        pr.a_alpha_y.resize(9);
        pr.a_alpha_y << -4.00e-4, -0.0011, -0.0157, -0.0733, 0.0037, 0.0048, 5.00e-4,
            -3.00e-4, 3.00e-4;
        pr.a_sigma = 0.988;
        pr.b_alpha0 = 0.6581;
        pr.b_alpha_x.resize(3);
        pr.b_alpha_x << 0.0599, -0.0591, 0.0602;
        pr.b_alpha_y.resize(9);
        pr.b_alpha_y << 0.0012, 8.00e-4, -0.3252, -0.2568, 0.7547, -0.0062, -0.0097,
            1.00e-4, -3.00e-4;
        pr.b_alpha_ybar.resize(9);
        pr.b_alpha_ybar << -4.00e-4, -5.00e-4, 0.0788, 0.0578, -0.2551, 0.0019, 0.0025,
            -2.00e-4, 2.00e-4;
        pr.b_sigma = 0.9878;
    }
    return pr;
}

void ScenarioConfig::validate() const {
    if (datasets < 1) throw InputError("scenario: datasets must be >= 1");
    if (individuals < 2) throw InputError("scenario: individuals must be >= 2");
    if (workers < 1) throw InputError("scenario: workers must be >= 1");
    if (imputations < 1) throw InputError("scenario: imputations must be >= 1");
    if (t_shares.empty()) throw InputError("scenario: day-count table empty");
    double total = 0.0;
    for (double s : t_shares) {
        if (s < 0.0) throw InputError("scenario: negative day-count share");
        total += s;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw InputError("scenario: day-count shares must sum to 1");
    if (outcome == OutcomeVariant::simple) {
        if (m_components != 1)
            throw InputError("scenario: the simple variant uses exactly one component");
        for (const auto& c : simple_cells)
            if (!(c.sigma2_eh > 0.0) || !(c.sigma2_eps > 0.0) || !(c.sigma2_u > 0.0))
                throw InputError("scenario: simple-cell variances must be > 0");
        return;
    }
    if (n_clusters < 2) throw InputError("scenario: n_clusters must be >= 2");
    for (int d : gold_days)
        if (d < 1) throw InputError("scenario: gold-standard day counts must be >= 1");
    params.validate(m_components);
}

std::vector<int> t_day_counts(int individuals, const std::vector<double>& shares) {
    const auto k = shares.size();
    std::vector<int> counts(k);
    std::vector<double> frac(k);
    int assigned = 0;
    for (std::size_t t = 0; t < k; ++t) {
        const double target = static_cast<double>(individuals) * shares[t];
        counts[t] = static_cast<int>(std::floor(target + 1e-9));
        frac[t] = target - static_cast<double>(counts[t]);
        assigned += counts[t];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (int r = 0; r < individuals - assigned; ++r) ++counts[order[static_cast<std::size_t>(r) % k]];
    return counts;
}

SimulatedDataset generate_dataset(const ScenarioConfig& config, int dataset_index) {
    config.validate();
    if (config.outcome == OutcomeVariant::simple)
        throw std::invalid_argument("generate_dataset covers the realistic variants only");
    const ScenarioParams& pr = config.params;
    const int n = config.individuals;
    const int m_comp = config.m_components;
    const auto p = pr.cov_mean.size();
    const std::uint64_t ds = static_cast<std::uint64_t>(dataset_index) + 1;

    SimulatedDataset out;

    // Day counts: first block of individuals reports 1 day, next block 2, ...
    const std::vector<int> counts = t_day_counts(n, config.t_shares);
    std::vector<int> days(static_cast<std::size_t>(n));
    {
        int i = 0;
        for (std::size_t t = 0; t < counts.size(); ++t)
            for (int r = 0; r < counts[t]; ++r) days[static_cast<std::size_t>(i++)] =
                static_cast<int>(t) + 1;
    }

    // Covariates, third one dichotomized after the multivariate draw.
    Eigen::MatrixXd x(n, p);
    {
        const Eigen::MatrixXd l = cholesky_factor(pr.cov_cov, "covariate covariance");
        RngStream st = RngStream::substream(config.master_seed,
                                            {kGenTag, ds, kPurposeCovariates});
        Eigen::VectorXd z(p);
        for (int i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) z[j] = st.normal();
            x.row(i) = (pr.cov_mean + l * z).transpose();
            if (p >= 3) x(i, 2) = x(i, 2) > 0.5 ? 1.0 : 0.0;
        }
    }

    // Individual random effects, optionally correlated across components.
    Eigen::MatrixXd u(n, m_comp);
    {
        RngStream st = RngStream::substream(config.master_seed, {kGenTag, ds, kPurposeU});
        if (config.correlated_u) {
            const Eigen::VectorXd sd = pr.sigma2_u.cwiseSqrt();
            const Eigen::MatrixXd cov =
                sd.asDiagonal() * pr.u_corr * sd.asDiagonal();
            const Eigen::MatrixXd l = cholesky_factor(cov, "random-effect covariance");
            Eigen::VectorXd z(m_comp);
            for (int i = 0; i < n; ++i) {
                for (int m = 0; m < m_comp; ++m) z[m] = st.normal();
                u.row(i) = (l * z).transpose();
            }
        } else {
            for (int i = 0; i < n; ++i)
                for (int m = 0; m < m_comp; ++m)
                    u(i, m) = st.normal(0.0, std::sqrt(pr.sigma2_u[m]));
        }
    }

    Eigen::MatrixXd linpred(n, m_comp);
    for (int i = 0; i < n; ++i)
        for (int m = 0; m < m_comp; ++m)
            linpred(i, m) = pr.beta0[m] + pr.beta.row(m).dot(x.row(i)) + u(i, m);

    out.panel.n_components = m_comp;
    out.panel.individuals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& ind = out.panel.individuals[static_cast<std::size_t>(i)];
        ind.id = std::to_string(i + 1);
        ind.covariates = x.row(i).transpose();
        ind.reports.resize(days[static_cast<std::size_t>(i)], m_comp);
    }

    // One batch = one set of extra days per individual (reports, truth, gold
    // standards). Untransformable draws are imputed from the uniform
    // distribution on [min, 5%-quantile] of the batch's successful
    // back-transforms, per component.
    auto run_batch = [&](std::uint64_t batch_tag, auto days_of, auto store) -> int {
        int imputed = 0;
        std::vector<double> vals;
        std::vector<std::size_t> failed;
        for (int m = 0; m < m_comp; ++m) {
            const double lambda = pr.lambda[m];
            const double sd = std::sqrt(pr.sigma2_eps[m]);
            RngStream st = RngStream::substream(
                config.master_seed,
                {kGenTag, ds, batch_tag, static_cast<std::uint64_t>(m) + 1});
            vals.clear();
            failed.clear();
            for (int i = 0; i < n; ++i) {
                const int d = days_of(i);
                for (int t = 0; t < d; ++t) {
                    const double tv = linpred(i, m) + st.normal(0.0, sd);
                    if (lambda == 1.0) {
                        vals.push_back(tv + 1.0);
                        continue;
                    }
                    const auto v = boxcox::try_inverse(tv, lambda);
                    if (v) {
                        vals.push_back(*v);
                    } else {
                        failed.push_back(vals.size());
                        vals.push_back(std::numeric_limits<double>::quiet_NaN());
                    }
                }
            }
            if (!failed.empty()) {
                std::vector<double> ok;
                ok.reserve(vals.size() - failed.size());
                for (double v : vals)
                    if (!std::isnan(v)) ok.push_back(v);
                if (ok.empty())
                    throw Error("dataset generation: every draw of a component was "
                                "untransformable");
                std::sort(ok.begin(), ok.end());
                const double lo = ok.front();
                const double hi = quantile_type7(ok, 0.05);
                RngStream imp = RngStream::substream(
                    config.master_seed, {kGenTag, ds, batch_tag,
                                         static_cast<std::uint64_t>(m) + 1, kImputeTag});
                for (std::size_t idx : failed) vals[idx] = imp.uniform(lo, hi);
                imputed += static_cast<int>(failed.size());
            }
            std::size_t pos = 0;
            for (int i = 0; i < n; ++i) {
                const int d = days_of(i);
                for (int t = 0; t < d; ++t) store(i, t, m, vals[pos++]);
            }
        }
        return imputed;
    };

    out.imputed_counts.clear();
    out.imputed_counts.push_back(run_batch(
        kBatchReports, [&](int i) { return days[static_cast<std::size_t>(i)]; },
        [&](int i, int t, int m, double v) {
            out.panel.individuals[static_cast<std::size_t>(i)].reports(t, m) = v;
        }));

    out.truth = Eigen::MatrixXd::Zero(n, m_comp);
    out.imputed_counts.push_back(run_batch(
        kBatchTruth, [](int) { return kTruthDays; },
        [&](int i, int, int m, double v) { out.truth(i, m) += v; }));
    out.truth /= static_cast<double>(kTruthDays);

    out.gold.clear();
    for (std::size_t g = 0; g < config.gold_days.size(); ++g) {
        const int gd = config.gold_days[g];
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, m_comp);
        out.imputed_counts.push_back(run_batch(
            kBatchGoldBase + g, [&](int) { return gd; },
            [&](int i, int, int m, double v) { acc(i, m) += v; }));
        acc /= static_cast<double>(gd);
        out.gold.push_back(std::move(acc));
    }

    const Eigen::MatrixXd ybar = out.panel.report_means();
    out.h_a.resize(n);
    out.h_b.resize(n);
    {
        RngStream st = RngStream::substream(config.master_seed,
                                            {kGenTag, ds, kPurposeOutcomeA});
        for (int i = 0; i < n; ++i)
            out.h_a[i] = pr.a_alpha0 + pr.a_alpha_x.dot(x.row(i)) +
                         pr.a_alpha_y.dot(out.truth.row(i)) +
                         st.normal(0.0, pr.a_sigma);
    }
    {
        RngStream st = RngStream::substream(config.master_seed,
                                            {kGenTag, ds, kPurposeOutcomeB});
        for (int i = 0; i < n; ++i)
            out.h_b[i] = pr.b_alpha0 + pr.b_alpha_x.dot(x.row(i)) +
                         pr.b_alpha_y.dot(out.truth.row(i)) +
                         pr.b_alpha_ybar.dot(ybar.row(i)) +
                         st.normal(0.0, pr.b_sigma);
    }
    out.h_a_cat = dichotomize_at_90th(out.h_a);
    out.h_b_cat = dichotomize_at_90th(out.h_b);
    return out;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    if (config.outcome == OutcomeVariant::simple)
        throw std::invalid_argument("run_scenario covers the realistic variants; "
                                    "use run_simple_setting");

    std::vector<std::string> names{"naive", "rc", "simex_q", "simex_c", "simex_q4",
                                   "mi", "mi_null"};
    for (int gd : config.gold_days) names.push_back("gs" + std::to_string(gd));
    const int n_methods = static_cast<int>(names.size());
    const int s_total = config.datasets;

    std::vector<std::vector<DatasetRow>> rows(
        static_cast<std::size_t>(n_methods),
        std::vector<DatasetRow>(static_cast<std::size_t>(s_total)));

    parallel_for(s_total, config.workers, [&](int s) {
        SimulatedDataset data = generate_dataset(config, s);
        const bool logistic = config.health == HealthModelKind::logistic;
        const Eigen::VectorXd h =
            config.outcome == OutcomeVariant::A ? (logistic ? data.h_a_cat : data.h_a)
                                                : (logistic ? data.h_b_cat : data.h_b);
        for (int i = 0; i < config.individuals; ++i)
            data.panel.individuals[static_cast<std::size_t>(i)].outcome = h[i];

        CorrectionOptions opts;
        opts.n_clusters = config.n_clusters;
        opts.cluster_method = config.cluster_method;
        opts.health_kind = config.health;
        opts.blup_mode = config.blup_mode;
        opts.mixed = config.mixed;
        opts.cluster = config.cluster;
        opts.simex = config.simex;
        opts.simex.degrees = {2, 3, 4};
        opts.imputations = config.imputations;
        opts.seed = RngStream::key(config.master_seed,
                                   {kCorrSeedTag, static_cast<std::uint64_t>(s) + 1});
        opts.workers = 1;

        const Eigen::MatrixXd x = data.panel.covariate_matrix();
        auto evaluate = [&](int slot, const Classifier& cls,
                            const Eigen::VectorXi& est_labels,
                            const Eigen::VectorXd& est_contrasts) {
            // The truth has less spread than the error-prone estimates the
            // classifier was trained on, so it is standardized by its own
            // moments before classification.
            const Eigen::VectorXi ref_labels = cls.classify_all_rescaled(data.truth);
            const HealthFit ref_fit =
                fit_health_model(config.health, h, ref_labels, x, cls.n_clusters());
            const ContrastSet ref = expand_contrasts(ref_fit);
            DatasetRow r;
            r.ok = true;
            r.mr = misclassification_rate(est_labels, ref_labels);
            r.ari = adjusted_rand_index(est_labels, ref_labels);
            const BiasSummary b = contrast_bias(est_contrasts, ref.values);
            r.dbar = b.mean_abs;
            r.dmax = b.max_abs;
            r.drel = b.mean_rel;
            r.rel_excl = b.n_rel_excluded;
            rows[static_cast<std::size_t>(slot)][static_cast<std::size_t>(s)] = r;
        };

        PipelineCache cache;
        try {
            const CorrectionResult res = correct_naive(data.panel, opts, &cache);
            evaluate(0, res.classifier, res.memberships, res.contrasts.values);
        } catch (const Error&) {
        }
        try {
            const CorrectionResult res = correct_rc(data.panel, opts, &cache);
            evaluate(1, res.classifier, res.memberships, res.contrasts.values);
        } catch (const Error&) {
        }
        try {
            const std::vector<CorrectionResult> res =
                correct_simex(data.panel, opts, &cache);
            for (std::size_t k = 0; k < res.size(); ++k)
                evaluate(2 + static_cast<int>(k), res[k].classifier, res[k].memberships,
                         res[k].contrasts.values);
        } catch (const Error&) {
        }
        try {
            const CorrectionResult res =
                correct_mi(data.panel, opts, /*include_outcome=*/true, &cache);
            evaluate(5, res.classifier, res.memberships, res.contrasts.values);
        } catch (const Error&) {
        }
        try {
            const CorrectionResult res =
                correct_mi(data.panel, opts, /*include_outcome=*/false, &cache);
            evaluate(6, res.classifier, res.memberships, res.contrasts.values);
        } catch (const Error&) {
        }

        for (std::size_t g = 0; g < config.gold_days.size(); ++g) {
            try {
                const std::uint64_t gseed = RngStream::key(
                    opts.seed,
                    {kGoldTag, static_cast<std::uint64_t>(config.gold_days[g])});
                ClusterModel model =
                    config.cluster_method == ClusterMethod::kmeans
                        ? fit_kmeans(data.gold[g], config.n_clusters, gseed, opts.cluster)
                        : fit_gmm(data.gold[g], config.n_clusters, gseed, opts.cluster);
                const Classifier cls = Classifier::from_model(std::move(model));
                const Eigen::VectorXi est_labels = cls.classify_all(data.gold[g]);
                const HealthFit fit = fit_health_model(config.health, h, est_labels, x,
                                                       config.n_clusters);
                evaluate(7 + static_cast<int>(g), cls, est_labels,
                         expand_contrasts(fit).values);
            } catch (const Error&) {
            }
        }
    });

    ScenarioResult result;
    result.scenario_id = config.id;
    for (int j = 0; j < n_methods; ++j)
        result.methods.push_back(
            summarize(names[static_cast<std::size_t>(j)], rows[static_cast<std::size_t>(j)]));
    return result;
}

std::vector<SimpleRow> run_simple_setting(const ScenarioConfig& config) {
    config.validate();
    if (config.outcome != OutcomeVariant::simple)
        throw std::invalid_argument("run_simple_setting needs the simple outcome variant");

    std::vector<SimpleCell> cells = config.simple_cells;
    if (cells.empty()) {
        static const double grid[] = {0.2, 1.0, 5.0};
        for (double eh : grid)
            for (double eps : grid)
                for (double su : grid) cells.push_back({eh, eps, su});
    }

    static const char* kMethods[] = {"naive", "rc", "simex", "mi"};
    constexpr int kNumMethods = 4;
    const int s_total = config.datasets;
    const int n = config.individuals;

    std::vector<SimpleRow> out;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const SimpleCell cell = cells[ci];
        struct DsEntry {
            double ref = std::numeric_limits<double>::quiet_NaN();
            std::array<std::optional<double>, kNumMethods> est;
        };
        std::vector<DsEntry> entries(static_cast<std::size_t>(s_total));

        parallel_for(s_total, config.workers, [&](int s) {
            const std::uint64_t cs = static_cast<std::uint64_t>(ci) + 1;
            const std::uint64_t dsn = static_cast<std::uint64_t>(s) + 1;
            RngStream ust =
                RngStream::substream(config.master_seed, {kSimpleGenTag, cs, dsn, 1});
            RngStream hst =
                RngStream::substream(config.master_seed, {kSimpleGenTag, cs, dsn, 2});
            RngStream rst =
                RngStream::substream(config.master_seed, {kSimpleGenTag, cs, dsn, 3});

            Eigen::MatrixXd truth(n, 1);
            Eigen::VectorXd h(n);
            ExposurePanel panel;
            panel.n_components = 1;
            panel.individuals.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) truth(i, 0) = ust.normal(0.0, std::sqrt(cell.sigma2_u));
            for (int i = 0; i < n; ++i)
                h[i] = truth(i, 0) + hst.normal(0.0, std::sqrt(cell.sigma2_eh));
            const double eps_sd = std::sqrt(cell.sigma2_eps);
            for (int i = 0; i < n; ++i) {
                auto& ind = panel.individuals[static_cast<std::size_t>(i)];
                ind.id = std::to_string(i + 1);
                ind.covariates = Eigen::VectorXd(0);
                ind.reports.resize(2, 1);
                ind.reports(0, 0) = truth(i, 0) + rst.normal(0.0, eps_sd);
                ind.reports(1, 0) = truth(i, 0) + rst.normal(0.0, eps_sd);
                ind.outcome = h[i];
            }

            CorrectionOptions opts;
            opts.fixed_cutoff = 0.0;
            opts.health_kind = HealthModelKind::linear;
            opts.blup_mode = config.blup_mode;
            opts.mixed = config.mixed;
            opts.mixed.fixed_lambda = 1.0;
            opts.simex = config.simex;
            opts.simex.degrees = {2};
            opts.imputations = config.imputations;
            opts.seed = RngStream::key(config.master_seed, {kSimpleCorrSeedTag, cs, dsn});
            opts.workers = 1;

            DsEntry& e = entries[static_cast<std::size_t>(s)];
            const Eigen::MatrixXd x(n, 0);
            try {
                const Classifier cut = Classifier::fixed_cutoff(0.0);
                const Eigen::VectorXi ref_labels = cut.classify_all(truth);
                const HealthFit ref_fit =
                    fit_health_model(HealthModelKind::linear, h, ref_labels, x, 2);
                e.ref = expand_contrasts(ref_fit).values[0];
            } catch (const Error&) {
                return;  // no reference, the whole dataset is unusable
            }

            PipelineCache cache;
            try {
                e.est[0] = correct_naive(panel, opts, &cache).contrasts.values[0];
            } catch (const Error&) {
            }
            try {
                e.est[1] = correct_rc(panel, opts, &cache).contrasts.values[0];
            } catch (const Error&) {
            }
            try {
                e.est[2] = correct_simex(panel, opts, &cache)[0].contrasts.values[0];
            } catch (const Error&) {
            }
            try {
                e.est[3] = correct_mi(panel, opts, /*include_outcome=*/true, &cache)
                               .contrasts.values[0];
            } catch (const Error&) {
            }
        });

        for (int j = 0; j < kNumMethods; ++j) {
            double rel_sum = 0.0;
            int used = 0;
            for (const auto& e : entries) {
                if (std::isnan(e.ref) || e.ref == 0.0 ||
                    !e.est[static_cast<std::size_t>(j)])
                    continue;
                rel_sum +=
                    std::abs(*e.est[static_cast<std::size_t>(j)] - e.ref) / std::abs(e.ref);
                ++used;
            }
            SimpleRow row;
            row.cell = cell;
            row.method = kMethods[j];
            row.n_failed = s_total - used;
            row.rel_bias = used > 0 ? rel_sum / used
                                    : std::numeric_limits<double>::quiet_NaN();
            out.push_back(row);
        }
    }
    return out;
}

} // namespace mecluster
