#include "harmonize/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "harmonize/parallel.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

using nlohmann::json;

EfficacyMode efficacy_mode_from_name(const std::string& name) {
    if (name == "raw") return EfficacyMode::raw;
    if (name == "harmonize_all") return EfficacyMode::harmonize_all;
    if (name == "harmonizer_in_cv") return EfficacyMode::harmonizer_in_cv;
    throw ValidationError("unknown efficacy mode '" + name + "'");
}

std::string efficacy_mode_name(EfficacyMode mode) {
    switch (mode) {
        case EfficacyMode::raw: return "raw";
        case EfficacyMode::harmonize_all: return "harmonize_all";
        case EfficacyMode::harmonizer_in_cv: return "harmonizer_in_cv";
    }
    return "raw";
}

namespace {

Pipeline site_pipeline(const EfficacyOptions& options, bool with_harmonizer) {
    Pipeline p;
    if (with_harmonizer)
        p.steps.push_back(std::make_unique<HarmonizerTransformer>(options.covariates, options.combat));
    p.estimator = std::make_unique<GbtEstimator>(options.gbt, /*classifier=*/true);
    return p;
}

Dataset with_site_codes(const Dataset& d, const std::vector<int>& codes) {
    return Dataset(d.subject_ids(), d.features(), d.feature_names(), codes, d.site_registry(),
                   d.covariates());
}

}  // namespace

EfficacyReport assess_efficacy(const Dataset& d, const EfficacyOptions& options) {
    if (d.site_count() < 2) throw ValidationError("efficacy assessment needs at least 2 sites");
    const TargetSpec target{"site"};

    EfficacyReport report;
    report.mode = efficacy_mode_name(options.mode);

    const Pipeline raw_pipeline = site_pipeline(options, false);
    report.raw_samples =
        run_cv(raw_pipeline, d, target, options.scheme, Metric::balanced_accuracy, options.threads)
            .samples;

    // The assessed procedure under this mode, also used as the permutation
    // null sampler so permuted models replicate it exactly.
    auto assess = [&](const Dataset& data, const CvScheme& scheme, int threads) {
        switch (options.mode) {
            case EfficacyMode::raw:
                return run_cv(site_pipeline(options, false), data, target, scheme,
                              Metric::balanced_accuracy, threads)
                    .samples;
            case EfficacyMode::harmonize_all: {
                HarmonizationModel model = combat_fit(data, options.covariates, options.combat);
                Dataset harmonized = combat_apply(model, data);
                return run_cv(site_pipeline(options, false), harmonized, target, scheme,
                              Metric::balanced_accuracy, threads)
                    .samples;
            }
            case EfficacyMode::harmonizer_in_cv:
                return run_cv(site_pipeline(options, true), data, target, scheme,
                              Metric::balanced_accuracy, threads)
                    .samples;
        }
        throw ValidationError("unreachable efficacy mode");
    };

    report.assessed_samples = options.mode == EfficacyMode::raw
                                  ? report.raw_samples
                                  : assess(d, options.scheme, options.threads);
    report.observed_statistic = report.assessed_samples.median();

    // Age-grouped permutation null: each permutation relabels sites within
    // age bins and reruns the assessed procedure as a single CV repetition.
    const CovariateColumn& age = d.covariate("age");
    if (age.kind != ColumnKind::numeric) throw ValidationError("age covariate must be numeric");
    auto null_metric = [&](const std::vector<int>& permuted_sites) {
        Dataset permuted = with_site_codes(d, permuted_sites);
        CvScheme one_rep{options.scheme.folds, 1, options.scheme.stratify_by, options.scheme.seed};
        return assess(permuted, one_rep, 1).values.row(0).mean();
    };
    report.permutation_p = age_group_permutation_test(
        report.observed_statistic, null_metric, age.numeric, d.site_codes(),
        options.age_bin_width, options.n_perm, derive_seed(options.scheme.seed, 0x9e3779b9ULL),
        options.threads, &report.warnings);

    // Reduction test: harmonized vs raw on identical (repetition, fold)
    // splits, one-sided toward lower accuracy after harmonization.
    if (options.mode == EfficacyMode::raw) {
        report.wilcoxon_p = 1.0;  // nothing to pair against
    } else {
        std::vector<double> harmonized_flat, raw_flat;
        for (int r = 0; r < report.assessed_samples.repetitions(); ++r)
            for (int f = 0; f < report.assessed_samples.folds(); ++f) {
                harmonized_flat.push_back(report.assessed_samples.values(r, f));
                raw_flat.push_back(report.raw_samples.values(r, f));
            }
        report.wilcoxon_p = wilcoxon_one_sided(harmonized_flat, raw_flat, Alternative::a_less);
    }

    if (report.permutation_p >= 0.05)
        report.verdict = "Removed";
    else if (report.wilcoxon_p < 0.05)
        report.verdict = "Reduced";
    else
        report.verdict = "NotReduced";
    return report;
}

namespace {

uint64_t id_fingerprint(const std::vector<std::string>& ids) {
    uint64_t hash = 1469598103934665603ULL;  // FNV-1a
    for (const auto& id : ids) {
        for (char c : id) {
            hash ^= static_cast<unsigned char>(c);
            hash *= 1099511628211ULL;
        }
        hash ^= '\n';
        hash *= 1099511628211ULL;
    }
    return hash;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

LeakageReport leakage_experiment(const SimulationConfig& config, const LeakageOptions& options) {
    if (options.repetitions < 2) throw ValidationError("leakage experiment needs >= 2 repetitions");
    const SimulatedData sim = simulate_dataset(config);
    const Dataset& data = sim.dataset;
    const TargetSpec target{options.site_task ? "site" : "age"};
    const Metric metric =
        options.site_task ? Metric::balanced_accuracy : Metric::mean_absolute_error;

    LeakageReport report;
    report.task = options.site_task ? "site" : "age";
    report.metric = options.site_task ? "balanced_accuracy" : "mean_absolute_error";
    report.external.resize(options.repetitions);
    report.leaked.resize(options.repetitions);
    report.not_leaked.resize(options.repetitions);
    report.split_fingerprints.resize(options.repetitions);

    parallel_for(static_cast<size_t>(options.repetitions), options.threads, [&](size_t rep) {
        const uint64_t rep_seed = derive_seed(options.seed, rep);
        auto [data_set, external_test] =
            split_holdout(data, options.holdout_fraction, "site", rep_seed);
        report.split_fingerprints[rep] = id_fingerprint(data_set.subject_ids());

        // External arm: harmonization fitted on a stratified fraction of the
        // data set (matching the share a CV training fold would provide),
        // applied to both halves; the predictor trains on the harmonized
        // data set and scores the harmonized external test set.
        {
            Dataset harmonization_subset =
                split_holdout(data_set, options.harmonization_fraction, "site",
                              derive_seed(rep_seed, 1))
                    .first;
            HarmonizationModel model =
                combat_fit(harmonization_subset, options.covariates, options.combat);
            Dataset harmonized_ds = combat_apply(model, data_set);
            Dataset harmonized_ext = combat_apply(model, external_test);
            GbtEstimator estimator(options.gbt, options.site_task);
            estimator.fit(harmonized_ds, target);
            if (options.site_task) {
                int n_classes = 0;
                std::vector<int> actual = target_codes(harmonized_ext, "site", n_classes);
                report.external[rep] =
                    balanced_accuracy(actual, estimator.predict_class(harmonized_ext), n_classes);
            } else {
                const CovariateColumn& age = harmonized_ext.covariate("age");
                report.external[rep] =
                    mean_absolute_error(age.numeric, estimator.predict_value(harmonized_ext));
            }
        }

        // Internal arms share one CV scheme so both see identical splits.
        const CvScheme scheme{options.cv_folds, options.cv_repetitions, "site",
                              derive_seed(rep_seed, 2)};

        {
            Pipeline pipeline;
            pipeline.steps.push_back(
                std::make_unique<HarmonizerTransformer>(options.covariates, options.combat));
            pipeline.estimator = std::make_unique<GbtEstimator>(options.gbt, options.site_task);
            CvResult cv = run_cv(pipeline, data_set, target, scheme, metric, 1);
            report.not_leaked[rep] = cv.samples.values.mean();
        }
        {
            HarmonizationModel model = combat_fit(data_set, options.covariates, options.combat);
            Dataset harmonized = combat_apply(model, data_set);
            Pipeline pipeline;
            pipeline.estimator = std::make_unique<GbtEstimator>(options.gbt, options.site_task);
            CvResult cv = run_cv(pipeline, harmonized, target, scheme, metric, 1);
            report.leaked[rep] = cv.samples.values.mean();
        }
    });

    report.mean_external = mean_of(report.external);
    report.sd_external = sd_of(report.external);
    report.mean_leaked = mean_of(report.leaked);
    report.sd_leaked = sd_of(report.leaked);
    report.mean_not_leaked = mean_of(report.not_leaked);
    report.sd_not_leaked = sd_of(report.not_leaked);
    report.t_p_leaked = paired_t_one_tailed(report.leaked, report.external, Alternative::a_less);
    report.t_p_not_leaked =
        paired_t_one_tailed(report.not_leaked, report.external, Alternative::a_less);
    report.t_p_leaked_adjusted = bonferroni(report.t_p_leaked, 2);
    report.t_p_not_leaked_adjusted = bonferroni(report.t_p_not_leaked, 2);
    report.cohens_d_leaked = cohens_d_paired(report.external, report.leaked);
    report.cohens_d_not_leaked = cohens_d_paired(report.external, report.not_leaked);
    return report;
}

namespace {

json samples_to_json(const PerformanceSamples& s) {
    json values = json::array();
    for (int r = 0; r < s.repetitions(); ++r) {
        json row = json::array();
        for (int f = 0; f < s.folds(); ++f) row.push_back(s.values(r, f));
        values.push_back(std::move(row));
    }
    return {{"metric", s.metric},
            {"values", std::move(values)},
            {"per_repetition_means", s.per_repetition_means()},
            {"median", s.median()},
            {"iqr", s.iqr()}};
}

}  // namespace

std::string efficacy_report_to_json(const EfficacyReport& report) {
    json j;
    j["mode"] = report.mode;
    j["raw"] = samples_to_json(report.raw_samples);
    j["assessed"] = samples_to_json(report.assessed_samples);
    j["observed_statistic"] = report.observed_statistic;
    j["permutation_p"] = report.permutation_p;
    j["wilcoxon_p"] = report.wilcoxon_p;
    j["verdict"] = report.verdict;
    j["warnings"] = report.warnings;
    return j.dump(2);
}

std::string leakage_report_to_json(const LeakageReport& report) {
    json j;
    j["task"] = report.task;
    j["metric"] = report.metric;
    j["external"] = report.external;
    j["leaked"] = report.leaked;
    j["not_leaked"] = report.not_leaked;
    j["split_fingerprints"] = report.split_fingerprints;
    j["summary"] = {
        {"external", {{"mean", report.mean_external}, {"sd", report.sd_external}}},
        {"leaked", {{"mean", report.mean_leaked}, {"sd", report.sd_leaked}}},
        {"not_leaked", {{"mean", report.mean_not_leaked}, {"sd", report.sd_not_leaked}}}};
    j["t_p_leaked"] = report.t_p_leaked;
    j["t_p_not_leaked"] = report.t_p_not_leaked;
    j["t_p_leaked_adjusted"] = report.t_p_leaked_adjusted;
    j["t_p_not_leaked_adjusted"] = report.t_p_not_leaked_adjusted;
    j["cohens_d_leaked"] = report.cohens_d_leaked;
    j["cohens_d_not_leaked"] = report.cohens_d_not_leaked;
    return j.dump(2);
}

}  // namespace harmonize
