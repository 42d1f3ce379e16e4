#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harmonize/pipeline.hpp"
#include "harmonize/simulate.hpp"

namespace harmonize {

enum class EfficacyMode { raw, harmonize_all, harmonizer_in_cv };

EfficacyMode efficacy_mode_from_name(const std::string& name);
std::string efficacy_mode_name(EfficacyMode mode);

struct EfficacyOptions {
    EfficacyMode mode = EfficacyMode::harmonizer_in_cv;
    CvScheme scheme{5, 20, "site", 0};
    int n_perm = 1000;
    double age_bin_width = 5.0;
    CovariateModelSpec covariates = CovariateModelSpec::parse("age:spline5");
    CombatOptions combat;
    GbtParams gbt;
    int threads = 1;
};

/// Two-step harmonization efficacy verdict:
///   Removed     permutation p >= 0.05 (site prediction at chance level)
///   Reduced     permutation p < 0.05 but Wilcoxon p < 0.05 vs raw
///   NotReduced  otherwise
struct EfficacyReport {
    std::string mode;
    PerformanceSamples raw_samples;
    PerformanceSamples assessed_samples;  // equals raw_samples in raw mode
    double observed_statistic = 0.0;      // median balanced accuracy under assessment
    double permutation_p = 1.0;
    double wilcoxon_p = 1.0;              // 1.0 in raw mode (no pairing information)
    std::string verdict;
    std::vector<std::string> warnings;
};

/// Site-prediction efficacy assessment: raw baseline CV, the assessed
/// pipeline per `mode`, an age-grouped permutation test of the assessed
/// pipeline, and the Wilcoxon comparison against raw on identical splits.
EfficacyReport assess_efficacy(const Dataset& d, const EfficacyOptions& options);

struct LeakageOptions {
    bool site_task = true;  // false: age regression task
    int repetitions = 20;   // full-scale protocol: 100
    int cv_repetitions = 10;
    int cv_folds = 5;
    double holdout_fraction = 0.5;
    double harmonization_fraction = 0.8;  // external-arm harmonization subset
    CovariateModelSpec covariates = CovariateModelSpec::parse("age:spline5");
    CombatOptions combat;
    GbtParams gbt;
    uint64_t seed = 0;
    int threads = 1;
};

/// Per-arm performance of the hold-out leakage experiment. Lower is better
/// for both tasks (site balanced accuracy measures the remaining site
/// signal; age error is an error).
struct LeakageReport {
    std::string task;  // "site" | "age"
    std::string metric;
    std::vector<double> external;    // per repetition
    std::vector<double> leaked;      // harmonize-everything-first arm
    std::vector<double> not_leaked;  // harmonizer inside the CV pipeline
    std::vector<uint64_t> split_fingerprints;  // shared hold-out id hash per repetition

    double mean_external = 0.0, sd_external = 0.0;
    double mean_leaked = 0.0, sd_leaked = 0.0;
    double mean_not_leaked = 0.0, sd_not_leaked = 0.0;
    double t_p_leaked = 1.0;       // one-tailed, internal < external
    double t_p_not_leaked = 1.0;
    double t_p_leaked_adjusted = 1.0;      // Bonferroni within this report (m = 2)
    double t_p_not_leaked_adjusted = 1.0;
    double cohens_d_leaked = 0.0;
    double cohens_d_not_leaked = 0.0;
};

/// The three-arm protocol per repetition on one simulated dataset:
/// 50/50 site-stratified hold-out; external arm harmonizes on a stratified
/// 80% subset, trains on the harmonized data set and scores the harmonized
/// external half; the internal arms run a stratified repeated CV with the
/// harmonizer inside (not leaked) or after whole-set harmonization (leaked).
/// All three arms of one repetition share the hold-out split.
LeakageReport leakage_experiment(const SimulationConfig& config, const LeakageOptions& options);

std::string efficacy_report_to_json(const EfficacyReport& report);
std::string leakage_report_to_json(const LeakageReport& report);

}  // namespace harmonize
