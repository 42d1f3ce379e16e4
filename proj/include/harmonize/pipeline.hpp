#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "harmonize/combat.hpp"
#include "harmonize/dataset.hpp"
#include "harmonize/gbt.hpp"
#include "harmonize/stats.hpp"

namespace harmonize {

/// Preprocessing step with learned state. fit() may read only its argument;
/// apply() must not mutate the fitted state (enforced by constness).
class Transformer {
public:
    virtual ~Transformer() = default;
    virtual std::unique_ptr<Transformer> clone_unfitted() const = 0;
    virtual void fit(const Dataset& train) = 0;
    virtual Dataset apply(const Dataset& d) const = 0;
};

/// Prediction target: the site column or a covariate column by name.
struct TargetSpec {
    std::string column = "site";
    bool is_site() const { return column == "site"; }
};

class Estimator {
public:
    virtual ~Estimator() = default;
    virtual std::unique_ptr<Estimator> clone_unfitted() const = 0;
    virtual bool is_classifier() const = 0;
    virtual void fit(const Dataset& train, const TargetSpec& target) = 0;
    virtual std::vector<int> predict_class(const Dataset& d) const = 0;
    virtual std::vector<double> predict_value(const Dataset& d) const = 0;
};

/// ComBat harmonization as a pipeline step.
class HarmonizerTransformer : public Transformer {
public:
    HarmonizerTransformer(CovariateModelSpec covariates, CombatOptions options = {})
        : covariates_(std::move(covariates)), options_(options) {}

    std::unique_ptr<Transformer> clone_unfitted() const override {
        return std::make_unique<HarmonizerTransformer>(covariates_, options_);
    }
    void fit(const Dataset& train) override { model_ = combat_fit(train, covariates_, options_); }
    Dataset apply(const Dataset& d) const override {
        if (!model_) throw ValidationError("harmonizer applied before fit");
        return combat_apply(*model_, d);
    }
    const HarmonizationModel& model() const {
        if (!model_) throw ValidationError("harmonizer is unfitted");
        return *model_;
    }

private:
    CovariateModelSpec covariates_;
    CombatOptions options_;
    std::optional<HarmonizationModel> model_;
};

/// Boosted-tree estimator over the dataset's feature matrix. Site targets
/// classify over the full site registry; numeric covariates are regressed;
/// categorical covariates classify over their level set.
class GbtEstimator : public Estimator {
public:
    explicit GbtEstimator(GbtParams params, bool classifier)
        : params_(params), classifier_(classifier) {}

    std::unique_ptr<Estimator> clone_unfitted() const override {
        return std::make_unique<GbtEstimator>(params_, classifier_);
    }
    bool is_classifier() const override { return classifier_; }
    void fit(const Dataset& train, const TargetSpec& target) override;
    std::vector<int> predict_class(const Dataset& d) const override;
    std::vector<double> predict_value(const Dataset& d) const override;

private:
    GbtParams params_;
    bool classifier_;
    std::optional<GbtModel> model_;
};

/// Ordered transformer chain with a final estimator.
struct Pipeline {
    std::vector<std::unique_ptr<Transformer>> steps;
    std::unique_ptr<Estimator> estimator;

    Pipeline clone_unfitted() const;
    void fit(const Dataset& train, const TargetSpec& target);
    Dataset transform_all(const Dataset& d) const;
    std::vector<int> predict_class(const Dataset& d) const;
    std::vector<double> predict_value(const Dataset& d) const;
};

struct CvScheme {
    int folds = 5;
    int repetitions = 1;
    std::string stratify_by = "site";  // empty string: unstratified
    uint64_t seed = 0;
};

/// Class labels (or covariate codes) extracted for stratification/metrics.
std::vector<int> target_codes(const Dataset& d, const std::string& column, int& n_classes);

/// Partition of [0, n) into `folds` test folds, stratified so per-stratum
/// fold sizes differ by at most one. Deterministic per seed.
std::vector<std::pair<std::vector<int>, std::vector<int>>> stratified_kfold(
    const std::vector<int>& labels, int folds, uint64_t seed);

enum class Metric { balanced_accuracy, mean_absolute_error };

struct CvResult {
    PerformanceSamples samples;
    /// Summed over every (repetition, fold) test set; classification only.
    std::optional<ConfusionMatrix> confusion;
};

/// Repeated stratified cross-validation of a pipeline. Every step and the
/// estimator are fitted on the training fold only; repetition r shuffles
/// with seed scheme.seed + r. Fold metrics are assembled in deterministic
/// (repetition, fold) order regardless of thread count.
CvResult run_cv(const Pipeline& prototype, const Dataset& d, const TargetSpec& target,
                const CvScheme& scheme, Metric metric, int threads = 1);

}  // namespace harmonize
