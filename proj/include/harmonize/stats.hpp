#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "harmonize/dataset.hpp"

namespace harmonize {

/// Rows are actual classes, columns predicted classes.
struct ConfusionMatrix {
    Eigen::MatrixXd counts;
    std::vector<std::string> class_names;

    static ConfusionMatrix zero(const std::vector<std::string>& names);
    void add(const std::vector<int>& actual, const std::vector<int>& predicted);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

/// Row-normalized confusion matrix; every row sums to 1.
Eigen::MatrixXd normalize_confusion(const ConfusionMatrix& c);

/// Per-(repetition, fold) metric values from a cross-validation run.
struct PerformanceSamples {
    Eigen::MatrixXd values;  // repetitions x folds
    std::string metric;

    int repetitions() const { return static_cast<int>(values.rows()); }
    int folds() const { return static_cast<int>(values.cols()); }
    std::vector<double> per_repetition_means() const;
    double median() const;  // median of per-repetition means
    double iqr() const;     // interquartile range of per-repetition means
    double mean() const;    // grand mean of per-repetition means
    double sd() const;      // sample sd (n-1) of per-repetition means
};

/// Type-7 quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

/// Unweighted mean of per-class recall. Every class in [0, n_classes) must
/// occur in `actual`.
double balanced_accuracy(const std::vector<int>& actual, const std::vector<int>& predicted,
                         int n_classes);

double mean_absolute_error(const std::vector<double>& actual, const std::vector<double>& predicted);

/// Permutation test with label shuffles restricted to age bins of width
/// `bin_width` anchored at the minimum age. The sampler is called once per
/// permutation with the shuffled labels and must return the metric under
/// that permutation. p = (#{perm >= observed} + 1) / (n_perm + 1).
/// Single-member bins contribute no permutation; a note per such bin is
/// appended to `warnings` when provided.
double age_group_permutation_test(double observed,
                                  const std::function<double(const std::vector<int>&)>& null_metric,
                                  const std::vector<double>& age, const std::vector<int>& labels,
                                  double bin_width, int n_perm, uint64_t seed, int threads = 1,
                                  std::vector<std::string>* warnings = nullptr);

enum class Alternative { a_less, a_greater };

enum class WilcoxonMethod { automatic, exact, normal_approx };

/// One-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; ties get mid-ranks. The automatic method enumerates the
/// sign-vector null exactly for <= 25 nonzero pairs and otherwise uses a
/// normal approximation with continuity and tie corrections.
double wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b,
                          Alternative alternative,
                          WilcoxonMethod method = WilcoxonMethod::automatic);

/// One-tailed paired Student t-test, df = n - 1.
double paired_t_one_tailed(const std::vector<double>& a, const std::vector<double>& b,
                           Alternative alternative);

/// min(1, m * p).
double bonferroni(double p, int m);

/// (mean(e) - mean(i)) / sd(e - i), sample sd with n - 1.
double cohens_d_paired(const std::vector<double>& external, const std::vector<double>& internal);

/// n-distribution Bhattacharyya coefficient over shared histogram bins:
/// sum over bins of the geometric mean of the per-group bin probabilities.
double bhattacharyya_n(const std::vector<std::vector<double>>& groups,
                       const std::vector<double>& bin_edges);

/// Shared bin edges of width `width` spanning the pooled range of all groups.
std::vector<double> shared_bins(const std::vector<std::vector<double>>& groups, double width);

struct AncovaResult {
    double partial_eta2 = 0.0;
    double f_statistic = 0.0;
    double p_value = 1.0;
    int df_effect = 0;
    int df_residual = 0;
};

/// Linear model of one feature on an effects-coded site factor plus
/// covariate terms; Type III sums of squares for the site factor.
/// Covariate terms are column names, optionally suffixed "^2" for a
/// squared numeric column; categorical columns are one-hot expanded.
AncovaResult ancova_partial_eta2(const Dataset& d, const std::string& feature,
                                 const std::vector<std::string>& covariate_terms);

}  // namespace harmonize
