#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mecluster/correction.hpp"
#include "mecluster/panel.hpp"

namespace mecluster {

// Generative constants of a synthetic study: per-component error models,
// covariate distribution, cross-component random-effect correlation and the
// two outcome-generating regressions. All dimensions must agree with M and
// the covariate count p.
struct ScenarioParams {
    Eigen::VectorXd lambda;      // M transform exponents
    Eigen::VectorXd beta0;       // M intercepts on the transformed scale
    Eigen::MatrixXd beta;        // M x p covariate coefficients
    Eigen::VectorXd sigma2_u;    // M between-individual variances
    Eigen::VectorXd sigma2_eps;  // M within-individual variances
    Eigen::VectorXd cov_mean;    // p
    Eigen::MatrixXd cov_cov;     // p x p, third covariate dichotomized after drawing
    Eigen::MatrixXd u_corr;      // M x M random-effect correlation

    // Outcome on true usual exposures: alpha0 + X a_x + truth a_y + N(0, s^2).
    double a_alpha0 = 0.0;
    Eigen::VectorXd a_alpha_x;
    Eigen::VectorXd a_alpha_y;
    double a_sigma = 1.0;
    // Differential outcome: adds the individual mean reports as predictors.
    double b_alpha0 = 0.0;
    Eigen::VectorXd b_alpha_x;
    Eigen::VectorXd b_alpha_y;
    Eigen::VectorXd b_alpha_ybar;
    double b_sigma = 1.0;

    void validate(int m_components) const;
};

// Constants fitted to the motivating dietary study; valid for 5 or 9
// components (5 components use the leading block of the 9-component tables
// but their own outcome regressions).
ScenarioParams default_scenario_params(int m_components);

enum class OutcomeVariant { A, B, simple };

// One variance cell of the single-exposure validation grid.
struct SimpleCell {
    double sigma2_eh = 1.0;
    double sigma2_eps = 1.0;
    double sigma2_u = 1.0;
};

struct ScenarioConfig {
    std::string id = "scenario";
    int datasets = 100;      // S
    int individuals = 500;   // I
    int m_components = 5;
    int n_clusters = 3;
    ClusterMethod cluster_method = ClusterMethod::gmm;
    bool correlated_u = false;
    OutcomeVariant outcome = OutcomeVariant::A;
    HealthModelKind health = HealthModelKind::linear;
    // Share of individuals with T_i = 1, 2, ... days; converted to exact
    // counts by largest remainder.
    std::vector<double> t_shares{0.35, 0.20, 0.40, 0.05};
    std::vector<int> gold_days{7, 28};
    std::uint64_t master_seed = 0;
    bool seed_set = false;  // config or command line provided one
    ScenarioParams params;  // defaults filled by the config loader
    SimexOptions simex;     // degrees ignored by run_scenario (always 2,3,4)
    int imputations = 300;
    BlupMode blup_mode = BlupMode::standard;
    MixedModelOptions mixed;
    ClusterOptions cluster;
    // Variance cells for the simple variant; empty means the full 3^3 grid.
    std::vector<SimpleCell> simple_cells;
    int workers = 1;

    void validate() const;
};

struct SimulatedDataset {
    ExposurePanel panel;               // reports + covariates, outcome unset
    Eigen::MatrixXd truth;             // I x M usual exposures (1000-day means)
    std::vector<Eigen::MatrixXd> gold; // per gold_days entry, I x M mean reports
    Eigen::VectorXd h_a, h_b;          // continuous outcomes
    Eigen::VectorXd h_a_cat, h_b_cat;  // 0/1 above the 90th percentile
    // Untransformable draws imputed from the uniform tail, per batch:
    // reports, truth, then one entry per gold_days entry.
    std::vector<int> imputed_counts;
};

// Exact day counts per T value for the largest-remainder split of I.
std::vector<int> t_day_counts(int individuals, const std::vector<double>& shares);

SimulatedDataset generate_dataset(const ScenarioConfig& config, int dataset_index);

struct MethodSummary {
    std::string method;
    double mr = 0.0;
    double ari = 0.0;
    double mean_abs_bias = 0.0;
    double max_abs_bias = 0.0;
    double med_rel_bias = 0.0;
    int n_failed = 0;
    int n_used = 0;
    long long rel_pairs_excluded = 0;
};

struct ScenarioResult {
    std::string scenario_id;
    std::vector<MethodSummary> methods;
};

// Runs every method (naive, rc, simex with degrees 2/3/4, mi, mi_null and
// the 7- and 28-day gold standards) on every dataset and aggregates the
// agreement and bias measures against per-method reference contrasts from
// the true exposures. Bit-identical across worker counts.
ScenarioResult run_scenario(const ScenarioConfig& config);

struct SimpleRow {
    SimpleCell cell;
    std::string method;
    double rel_bias = 0.0;
    int n_failed = 0;
};

// Single-exposure validation design: Y = u, two reports Y + eps, outcome
// H = Y + e_H, classification by the fixed cutoff 0, identity transform.
// rel_bias per cell is the mean over datasets of |est - ref| / |ref|, where
// ref is that dataset's contrast under the true exposures; per-dataset
// estimator variance therefore contributes to the reported value.
std::vector<SimpleRow> run_simple_setting(const ScenarioConfig& config);

} // namespace mecluster
