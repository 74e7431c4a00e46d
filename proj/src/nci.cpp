#include "mecluster/nci.hpp"

#include <cmath>
#include <stdexcept>

#include "mecluster/errors.hpp"

namespace mecluster {

double estimate_usual_component(const ErrorModelComponent& comp, const Individual& ind,
                                BlupMode mode, NciDiagnostics* diag) {
    double mu = blup_transformed(comp, ind, mode);
    const double lambda = comp.lambda;
    if (lambda == 1.0) return mu + 1.0;

    double base = lambda * mu + 1.0;
    if (base <= 0.0) {
        mu = -1.0 / lambda + 1e-9;
        base = lambda * 1e-9;
        if (diag) ++diag->boundary_clamped;
    }
    const double inv = std::pow(base, 1.0 / lambda);
    const double value =
        inv + 0.5 * (1.0 - lambda) * std::pow(base, 1.0 / lambda - 2.0) * comp.sigma2_eps;
    // A large negative correction (lambda > 1 near the boundary) must not
    // push the estimate out of the positive exposure range.
    if (!(value > 0.0) || !std::isfinite(value)) {
        if (diag) ++diag->floored;
        return inv;
    }
    return value;
}

Eigen::MatrixXd estimate_usual(const ErrorModelFit& fit, const ExposurePanel& panel,
                               BlupMode mode, NciDiagnostics* diag) {
    if (fit.n_components() != panel.n_components)
        throw std::invalid_argument("estimate_usual: fit/panel component mismatch");
    Eigen::MatrixXd est(panel.size(), panel.n_components);
    for (int i = 0; i < panel.size(); ++i) {
        const Individual& ind = panel.individuals[static_cast<std::size_t>(i)];
        for (int m = 0; m < panel.n_components; ++m)
            est(i, m) = estimate_usual_component(
                fit.components[static_cast<std::size_t>(m)], ind, mode, diag);
    }
    return est;
}

} // namespace mecluster
