#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace mecluster {

// One study participant: repeated reports of M exposure components on T_i
// days (rows = days, columns = components), error-free covariates, and an
// optional health outcome.
struct Individual {
    std::string id;
    Eigen::VectorXd covariates;
    Eigen::MatrixXd reports;
    std::optional<double> outcome;

    int days() const { return static_cast<int>(reports.rows()); }
};

// Repeatedly measured exposure panel. Reports are strictly positive on the
// original scale; fits that fix the transform to the identity may relax the
// positivity requirement (see MixedModelOptions::fixed_lambda).
struct ExposurePanel {
    int n_components = 0;
    std::vector<Individual> individuals;

    int size() const { return static_cast<int>(individuals.size()); }
    int n_covariates() const {
        return individuals.empty()
                   ? 0
                   : static_cast<int>(individuals.front().covariates.size());
    }
    int total_days() const;

    bool outcomes_complete() const;
    // True when every present outcome is 0 or 1.
    bool outcomes_binary() const;

    // Throws InputError on inconsistent dimensions, empty panel, nonfinite
    // entries, T_i < 1, or (when require_positive) nonpositive reports.
    void validate(bool require_positive = true) const;

    // I x M matrix of per-individual report means (stage-1 naive estimate).
    Eigen::MatrixXd report_means() const;
    // I x p covariate matrix.
    Eigen::MatrixXd covariate_matrix() const;
    // Length-I outcome vector; throws InputError if any outcome is missing.
    Eigen::VectorXd outcome_vector() const;
};

} // namespace mecluster
