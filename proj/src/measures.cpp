#include "mecluster/measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "mecluster/errors.hpp"

namespace mecluster {

double misclassification_rate(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
    if (a.size() != b.size() || a.size() == 0)
        throw std::invalid_argument("misclassification_rate: label vectors must match in size");
    int mismatches = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) ++mismatches;
    return 100.0 * static_cast<double>(mismatches) / static_cast<double>(a.size());
}

namespace {
double choose2(double n) { return n * (n - 1.0) / 2.0; }
} // namespace

double adjusted_rand_index(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
    if (a.size() != b.size() || a.size() == 0)
        throw std::invalid_argument("adjusted_rand_index: label vectors must match in size");
    const Eigen::Index n = a.size();

    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows, cols;
    for (Eigen::Index i = 0; i < n; ++i) {
        joint[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }

    double sum_joint = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, cnt] : joint) sum_joint += choose2(cnt);
    for (const auto& [key, cnt] : rows) sum_rows += choose2(cnt);
    for (const auto& [key, cnt] : cols) sum_cols += choose2(cnt);

    const double total_pairs = choose2(static_cast<double>(n));
    const double expected = sum_rows * sum_cols / total_pairs;
    const double maximum = 0.5 * (sum_rows + sum_cols);
    const double denom = maximum - expected;
    if (denom == 0.0) {
        // Both partitions trivial; agree on every pair <=> joint index maximal.
        return (sum_joint == maximum) ? 1.0 : 0.0;
    }
    return (sum_joint - expected) / denom;
}

BiasSummary contrast_bias(const Eigen::VectorXd& estimated,
                          const Eigen::VectorXd& reference) {
    if (estimated.size() != reference.size() || estimated.size() == 0)
        throw std::invalid_argument("contrast_bias: contrast vectors must match in size");
    BiasSummary out;
    double rel_sum = 0.0;
    int rel_used = 0;
    for (Eigen::Index k = 0; k < reference.size(); ++k) {
        const double abs_err = std::abs(reference[k] - estimated[k]);
        out.mean_abs += abs_err;
        out.max_abs = std::max(out.max_abs, abs_err);
        if (std::abs(reference[k]) < 1e-12) {
            ++out.n_rel_excluded;
        } else {
            rel_sum += abs_err / std::abs(reference[k]);
            ++rel_used;
        }
    }
    out.mean_abs /= static_cast<double>(reference.size());
    out.mean_rel = (rel_used > 0) ? rel_sum / static_cast<double>(rel_used) : 0.0;
    return out;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean of empty vector");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double lower_median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty vector");
    const std::size_t k = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

} // namespace mecluster
