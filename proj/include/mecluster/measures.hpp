#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mecluster {

// Percentage of positions where the two label vectors disagree. Labels are
// compared as-is: both vectors must already refer to the same frozen
// classifier, so no permutation matching is applied.
double misclassification_rate(const Eigen::VectorXi& a, const Eigen::VectorXi& b);

// Hubert-Arabie adjusted Rand index. 1 for identical partitions; 0 expected
// under independent random labelings; can be negative. When the adjustment
// denominator is zero (both partitions trivial) returns 1 if the partitions
// agree on every pair and 0 otherwise.
double adjusted_rand_index(const Eigen::VectorXi& a, const Eigen::VectorXi& b);

// Per-dataset comparison of estimated vs reference contrast vectors
// (same pair ordering, length C(C-1)/2).
struct BiasSummary {
    double mean_abs = 0.0;   // average |ref - est| over all pairs
    double max_abs = 0.0;    // worst pair
    double mean_rel = 0.0;   // average |ref - est| / |ref| over usable pairs
    int n_rel_excluded = 0;  // pairs dropped because |ref| < 1e-12
};

BiasSummary contrast_bias(const Eigen::VectorXd& estimated,
                          const Eigen::VectorXd& reference);

double mean(const std::vector<double>& v);
// Median using the lower middle element for even sizes, so the aggregate is
// always a value that actually occurred.
double lower_median(std::vector<double> v);

} // namespace mecluster
