#include "harmonize/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "harmonize/parallel.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097); }

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

ConfusionMatrix ConfusionMatrix::zero(const std::vector<std::string>& names) {
    ConfusionMatrix c;
    c.class_names = names;
    c.counts = Eigen::MatrixXd::Zero(static_cast<int>(names.size()), static_cast<int>(names.size()));
    return c;
}

void ConfusionMatrix::add(const std::vector<int>& actual, const std::vector<int>& predicted) {
    if (actual.size() != predicted.size()) throw ValidationError("confusion inputs differ in length");
    for (size_t i = 0; i < actual.size(); ++i) counts(actual[i], predicted[i]) += 1.0;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (class_names != other.class_names) throw ValidationError("confusion class sets differ");
    counts += other.counts;
    return *this;
}

Eigen::MatrixXd normalize_confusion(const ConfusionMatrix& c) {
    Eigen::MatrixXd out = c.counts;
    for (int r = 0; r < out.rows(); ++r) {
        const double total = out.row(r).sum();
        if (total <= 0.0)
            throw ValidationError("confusion row '" + c.class_names[r] + "' has zero total");
        out.row(r) /= total;
    }
    return out;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("quantile of empty vector");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<double> PerformanceSamples::per_repetition_means() const {
    std::vector<double> out(repetitions());
    for (int r = 0; r < repetitions(); ++r) out[r] = values.row(r).mean();
    return out;
}

double PerformanceSamples::median() const { return quantile(per_repetition_means(), 0.5); }

double PerformanceSamples::iqr() const {
    auto means = per_repetition_means();
    return quantile(means, 0.75) - quantile(means, 0.25);
}

double PerformanceSamples::mean() const { return mean_of(per_repetition_means()); }

double PerformanceSamples::sd() const { return sample_sd(per_repetition_means()); }

double balanced_accuracy(const std::vector<int>& actual, const std::vector<int>& predicted,
                         int n_classes) {
    if (actual.size() != predicted.size())
        throw ValidationError("actual and predicted lengths differ");
    if (actual.empty()) throw ValidationError("empty label vectors");
    std::vector<double> total(n_classes, 0.0), correct(n_classes, 0.0);
    for (size_t i = 0; i < actual.size(); ++i) {
        const int a = actual[i];
        if (a < 0 || a >= n_classes) throw ValidationError("actual class outside range");
        total[a] += 1.0;
        if (predicted[i] == a) correct[a] += 1.0;
    }
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        if (total[c] == 0.0)
            throw ValidationError("class " + std::to_string(c) + " has zero actual instances");
        sum += correct[c] / total[c];
    }
    return sum / static_cast<double>(n_classes);
}

double mean_absolute_error(const std::vector<double>& actual, const std::vector<double>& predicted) {
    if (actual.size() != predicted.size())
        throw ValidationError("actual and predicted lengths differ");
    if (actual.empty()) throw ValidationError("empty input");
    double sum = 0.0;
    for (size_t i = 0; i < actual.size(); ++i) sum += std::abs(actual[i] - predicted[i]);
    return sum / static_cast<double>(actual.size());
}

double age_group_permutation_test(double observed,
                                  const std::function<double(const std::vector<int>&)>& null_metric,
                                  const std::vector<double>& age, const std::vector<int>& labels,
                                  double bin_width, int n_perm, uint64_t seed, int threads,
                                  std::vector<std::string>* warnings) {
    if (age.size() != labels.size()) throw ValidationError("age and label lengths differ");
    if (age.empty()) throw ValidationError("empty inputs");
    if (n_perm < 1) throw ValidationError("n_perm must be >= 1");
    if (!(bin_width > 0.0)) throw ValidationError("bin width must be positive");

    const double age_min = *std::min_element(age.begin(), age.end());
    std::vector<std::vector<int>> bins;
    {
        std::vector<int> bin_of(age.size());
        int max_bin = 0;
        for (size_t i = 0; i < age.size(); ++i) {
            bin_of[i] = static_cast<int>(std::floor((age[i] - age_min) / bin_width));
            max_bin = std::max(max_bin, bin_of[i]);
        }
        bins.assign(max_bin + 1, {});
        for (size_t i = 0; i < age.size(); ++i) bins[bin_of[i]].push_back(static_cast<int>(i));
    }
    if (warnings) {
        for (size_t b = 0; b < bins.size(); ++b)
            if (bins[b].size() == 1)
                warnings->push_back("age bin " + std::to_string(b) +
                                    " has a single member and contributes no permutation");
    }

    std::vector<double> null_values(n_perm);
    parallel_for(static_cast<size_t>(n_perm), threads, [&](size_t p) {
        Rng rng(derive_seed(seed, p));
        std::vector<int> permuted = labels;
        for (const auto& bin : bins) {
            // Fisher-Yates over the label values at this bin's positions.
            for (size_t i = bin.size(); i > 1; --i) {
                const size_t j = static_cast<size_t>(rng.next_below(i));
                std::swap(permuted[bin[i - 1]], permuted[bin[j]]);
            }
        }
        null_values[p] = null_metric(permuted);
    });

    int at_least = 0;
    for (double v : null_values) at_least += v >= observed ? 1 : 0;
    return static_cast<double>(at_least + 1) / static_cast<double>(n_perm + 1);
}

namespace {

// Mid-ranks of |d|, doubled so they are exact integers.
std::vector<long long> doubled_ranks(const std::vector<double>& abs_d) {
    const size_t m = abs_d.size();
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return abs_d[i] < abs_d[j]; });
    std::vector<long long> rank2(m);
    size_t i = 0;
    while (i < m) {
        size_t j = i;
        while (j + 1 < m && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
        // Positions i..j (0-based) share mid-rank ((i+1)+(j+1))/2; doubled: i+j+2.
        const long long r2 = static_cast<long long>(i + j + 2);
        for (size_t t = i; t <= j; ++t) rank2[order[t]] = r2;
        i = j + 1;
    }
    return rank2;
}

}  // namespace

double wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b,
                          Alternative alternative, WilcoxonMethod method) {
    if (a.size() != b.size()) throw ValidationError("paired samples differ in length");
    std::vector<double> diffs;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    const size_t m = diffs.size();
    if (m == 0) throw ValidationError("all paired differences are zero");

    std::vector<double> abs_d(m);
    for (size_t i = 0; i < m; ++i) abs_d[i] = std::abs(diffs[i]);
    const std::vector<long long> rank2 = doubled_ranks(abs_d);

    long long w_plus2 = 0;
    for (size_t i = 0; i < m; ++i)
        if (diffs[i] > 0.0) w_plus2 += rank2[i];

    const bool use_exact =
        method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && m <= 25);
    if (use_exact) {
        if (m > 62) throw ValidationError("exact Wilcoxon null is limited to 62 nonzero pairs");
        // Exact null of W+ over all sign vectors via the rank-sum
        // distribution (counts are exact in double up to 2^53).
        const long long total2 = std::accumulate(rank2.begin(), rank2.end(), 0LL);
        std::vector<double> count(total2 + 1, 0.0);
        count[0] = 1.0;
        for (size_t i = 0; i < m; ++i) {
            for (long long s = total2; s >= rank2[i]; --s) count[s] += count[s - rank2[i]];
        }
        const double denom = std::pow(2.0, static_cast<double>(m));
        double tail = 0.0;
        if (alternative == Alternative::a_greater) {
            for (long long s = w_plus2; s <= total2; ++s) tail += count[s];
        } else {
            for (long long s = 0; s <= w_plus2; ++s) tail += count[s];
        }
        return tail / denom;
    }

    // Normal approximation with tie correction and continuity correction.
    const double n = static_cast<double>(m);
    const double mean = n * (n + 1.0) / 4.0;
    double tie_term = 0.0;
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < m) {
            size_t j = i;
            while (j + 1 < m && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) throw ValidationError("degenerate signed-rank variance");
    const double w_plus = static_cast<double>(w_plus2) / 2.0;
    if (alternative == Alternative::a_greater)
        return 1.0 - normal_cdf((w_plus - mean - 0.5) / std::sqrt(var));
    return normal_cdf((w_plus - mean + 0.5) / std::sqrt(var));
}

double paired_t_one_tailed(const std::vector<double>& a, const std::vector<double>& b,
                           Alternative alternative) {
    if (a.size() != b.size()) throw ValidationError("paired samples differ in length");
    const size_t n = a.size();
    if (n < 2) throw ValidationError("paired t-test needs at least 2 pairs");
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double m = mean_of(d);
    const double sd = sample_sd(d);
    if (!(sd > 0.0)) throw ValidationError("zero variance of paired differences");
    const double t = m / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    const double lower = boost::math::cdf(dist, t);
    const double p = alternative == Alternative::a_less ? lower : 1.0 - lower;
    return std::max(p, std::numeric_limits<double>::min());  // p-values live in (0, 1]
}

double bonferroni(double p, int m) {
    if (m < 1) throw ValidationError("bonferroni needs m >= 1");
    return std::min(1.0, p * static_cast<double>(m));
}

double cohens_d_paired(const std::vector<double>& external, const std::vector<double>& internal) {
    if (external.size() != internal.size()) throw ValidationError("paired samples differ in length");
    if (external.size() < 2) throw ValidationError("need at least 2 pairs");
    std::vector<double> d(external.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = external[i] - internal[i];
    const double s = sample_sd(d);
    const double num = mean_of(external) - mean_of(internal);
    if (!(s > 0.0)) {
        if (num == 0.0) return 0.0;  // identical samples: no effect by definition
        throw ValidationError("zero sd of paired differences");
    }
    return num / s;
}

std::vector<double> shared_bins(const std::vector<std::vector<double>>& groups, double width) {
    if (!(width > 0.0)) throw ValidationError("bin width must be positive");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& g : groups)
        for (double v : g) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(lo <= hi)) throw ValidationError("no values to bin");
    std::vector<double> edges;
    const int n_bins = std::max(2, static_cast<int>(std::ceil((hi - lo) / width)));
    for (int i = 0; i <= n_bins; ++i) edges.push_back(lo + width * static_cast<double>(i));
    return edges;
}

double bhattacharyya_n(const std::vector<std::vector<double>>& groups,
                       const std::vector<double>& bin_edges) {
    const size_t n_groups = groups.size();
    if (n_groups < 2) throw ValidationError("Bhattacharyya coefficient needs >= 2 groups");
    if (bin_edges.size() < 3) throw ValidationError("need at least 2 bins");
    const size_t n_bins = bin_edges.size() - 1;

    std::vector<std::vector<double>> prob(n_groups, std::vector<double>(n_bins, 0.0));
    for (size_t gi = 0; gi < n_groups; ++gi) {
        const auto& g = groups[gi];
        if (g.empty()) throw ValidationError("empty group in Bhattacharyya coefficient");
        for (double v : g) {
            // Values at or beyond the outer edges land in the end bins.
            auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
            long long bin = std::clamp<long long>(it - bin_edges.begin() - 1, 0,
                                                  static_cast<long long>(n_bins) - 1);
            prob[gi][static_cast<size_t>(bin)] += 1.0;
        }
        for (double& p : prob[gi]) p /= static_cast<double>(g.size());
    }

    double bc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_groups);
    for (size_t b = 0; b < n_bins; ++b) {
        double prod = 1.0;
        for (size_t gi = 0; gi < n_groups; ++gi) prod *= prob[gi][b];
        if (prod > 0.0) bc += std::pow(prod, inv_n);
    }
    return bc;
}

AncovaResult ancova_partial_eta2(const Dataset& d, const std::string& feature,
                                 const std::vector<std::string>& covariate_terms) {
    const int n = d.n();
    const int k = d.site_count();
    if (k < 2) throw ValidationError("ANCOVA needs at least 2 sites");

    int feature_index = -1;
    for (int f = 0; f < d.feature_count(); ++f)
        if (d.feature_names()[f] == feature) feature_index = f;
    if (feature_index < 0) throw ValidationError("unknown feature '" + feature + "'");
    const Eigen::VectorXd y = d.features().col(feature_index);

    // Covariate block: numeric columns (optionally squared), categoricals
    // one-hot with the first level dropped.
    std::vector<Eigen::VectorXd> cov_cols;
    for (const auto& term : covariate_terms) {
        std::string name = term;
        bool squared = false;
        if (name.size() > 2 && name.substr(name.size() - 2) == "^2") {
            squared = true;
            name = name.substr(0, name.size() - 2);
        }
        const CovariateColumn& col = d.covariate(name);
        if (col.kind == ColumnKind::numeric) {
            Eigen::VectorXd v(n);
            for (int r = 0; r < n; ++r)
                v[r] = squared ? col.numeric[r] * col.numeric[r] : col.numeric[r];
            cov_cols.push_back(std::move(v));
        } else {
            if (squared) throw ValidationError("cannot square categorical covariate '" + name + "'");
            for (size_t level = 1; level < col.levels.size(); ++level) {
                Eigen::VectorXd v(n);
                for (int r = 0; r < n; ++r) v[r] = col.codes[r] == static_cast<int>(level) ? 1.0 : 0.0;
                cov_cols.push_back(std::move(v));
            }
        }
    }

    const int q = static_cast<int>(cov_cols.size());
    const int p_full = 1 + (k - 1) + q;
    if (n <= p_full) throw ValidationError("too few rows for the ANCOVA design");

    // Full design: intercept | effects-coded site | covariates.
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, p_full);
    full.col(0).setOnes();
    for (int r = 0; r < n; ++r) {
        const int s = d.site_codes()[r];
        if (s == k - 1)
            for (int j = 0; j < k - 1; ++j) full(r, 1 + j) = -1.0;
        else
            full(r, 1 + s) = 1.0;
    }
    for (int j = 0; j < q; ++j) full.col(k + j) = cov_cols[j];

    Eigen::MatrixXd reduced(n, 1 + q);
    reduced.col(0).setOnes();
    for (int j = 0; j < q; ++j) reduced.col(1 + j) = cov_cols[j];

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_full(full);
    if (qr_full.rank() < p_full)
        throw ValidationError("singular ANCOVA design (a site may be confounded with a covariate)");
    const double rss_full = (y - full * qr_full.solve(y)).squaredNorm();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_reduced(reduced);
    if (qr_reduced.rank() < 1 + q) throw ValidationError("singular reduced ANCOVA design");
    const double rss_reduced = (y - reduced * qr_reduced.solve(y)).squaredNorm();

    AncovaResult result;
    result.df_effect = k - 1;
    result.df_residual = n - p_full;
    const double ss_site = std::max(0.0, rss_reduced - rss_full);
    result.partial_eta2 = ss_site + rss_full > 0.0 ? ss_site / (ss_site + rss_full) : 0.0;
    if (rss_full <= 0.0) {
        // Perfect fit: all residual variance explained.
        result.f_statistic = std::numeric_limits<double>::infinity();
        result.p_value = std::numeric_limits<double>::min();
        return result;
    }
    result.f_statistic =
        (ss_site / result.df_effect) / (rss_full / result.df_residual);
    boost::math::fisher_f dist(result.df_effect, result.df_residual);
    result.p_value =
        std::max(1.0 - boost::math::cdf(dist, result.f_statistic),
                 std::numeric_limits<double>::min());
    return result;
}

}  // namespace harmonize
