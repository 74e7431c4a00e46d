#include "mecluster/panel.hpp"

#include <cmath>

#include "mecluster/errors.hpp"

namespace mecluster {

int ExposurePanel::total_days() const {
    int t = 0;
    for (const auto& ind : individuals) t += ind.days();
    return t;
}

bool ExposurePanel::outcomes_complete() const {
    for (const auto& ind : individuals)
        if (!ind.outcome.has_value()) return false;
    return !individuals.empty();
}

bool ExposurePanel::outcomes_binary() const {
    for (const auto& ind : individuals) {
        if (!ind.outcome) continue;
        const double h = *ind.outcome;
        if (h != 0.0 && h != 1.0) return false;
    }
    return true;
}

void ExposurePanel::validate(bool require_positive) const {
    if (individuals.empty()) throw InputError("panel has no individuals");
    if (n_components < 1) throw InputError("panel needs n_components >= 1");
    const auto p = individuals.front().covariates.size();
    for (const auto& ind : individuals) {
        if (ind.covariates.size() != p)
            throw InputError("individual " + ind.id +
                             ": covariate count differs from the rest of the panel");
        if (ind.reports.cols() != n_components)
            throw InputError("individual " + ind.id +
                             ": report columns != n_components");
        if (ind.reports.rows() < 1)
            throw InputError("individual " + ind.id + ": needs at least one report day");
        if (!ind.reports.allFinite() || !ind.covariates.allFinite())
            throw InputError("individual " + ind.id + ": nonfinite value");
        if (ind.outcome && !std::isfinite(*ind.outcome))
            throw InputError("individual " + ind.id + ": nonfinite outcome");
        if (require_positive && (ind.reports.array() <= 0.0).any())
            throw InputError("individual " + ind.id +
                             ": nonpositive report (exposures must be > 0)");
    }
}

Eigen::MatrixXd ExposurePanel::report_means() const {
    Eigen::MatrixXd means(size(), n_components);
    for (int i = 0; i < size(); ++i)
        means.row(i) = individuals[i].reports.colwise().mean();
    return means;
}

Eigen::MatrixXd ExposurePanel::covariate_matrix() const {
    const int p = n_covariates();
    Eigen::MatrixXd x(size(), p);
    for (int i = 0; i < size(); ++i) x.row(i) = individuals[i].covariates.transpose();
    return x;
}

Eigen::VectorXd ExposurePanel::outcome_vector() const {
    Eigen::VectorXd h(size());
    for (int i = 0; i < size(); ++i) {
        if (!individuals[i].outcome)
            throw InputError("individual " + individuals[i].id + ": outcome missing");
        h[i] = *individuals[i].outcome;
    }
    return h;
}

} // namespace mecluster
