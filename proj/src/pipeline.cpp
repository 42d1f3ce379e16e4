#include "harmonize/pipeline.hpp"

#include <algorithm>

#include "harmonize/parallel.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

namespace {

Eigen::VectorXd numeric_target(const Dataset& d, const std::string& column) {
    const CovariateColumn& col = d.covariate(column);
    if (col.kind != ColumnKind::numeric)
        throw ValidationError("target column '" + column + "' is not numeric");
    return Eigen::Map<const Eigen::VectorXd>(col.numeric.data(), d.n());
}

}  // namespace

std::vector<int> target_codes(const Dataset& d, const std::string& column, int& n_classes) {
    if (column == "site") {
        n_classes = d.site_count();
        return d.site_codes();
    }
    const CovariateColumn& col = d.covariate(column);
    if (col.kind != ColumnKind::categorical)
        throw ValidationError("column '" + column + "' is not categorical");
    n_classes = static_cast<int>(col.levels.size());
    return col.codes;
}

void GbtEstimator::fit(const Dataset& train, const TargetSpec& target) {
    if (classifier_) {
        int n_classes = 0;
        const std::vector<int> y = target_codes(train, target.column, n_classes);
        model_ = train_classifier(train.features(), y, n_classes, params_);
    } else {
        model_ = train_regressor(train.features(), numeric_target(train, target.column), params_);
    }
}

std::vector<int> GbtEstimator::predict_class(const Dataset& d) const {
    if (!model_) throw ValidationError("estimator predicts before fit");
    return model_->predict_class(d.features());
}

std::vector<double> GbtEstimator::predict_value(const Dataset& d) const {
    if (!model_) throw ValidationError("estimator predicts before fit");
    return model_->predict_value(d.features());
}

Pipeline Pipeline::clone_unfitted() const {
    Pipeline p;
    for (const auto& s : steps) p.steps.push_back(s->clone_unfitted());
    if (!estimator) throw ValidationError("pipeline needs exactly one estimator");
    p.estimator = estimator->clone_unfitted();
    return p;
}

void Pipeline::fit(const Dataset& train, const TargetSpec& target) {
    if (!estimator) throw ValidationError("pipeline needs exactly one estimator");
    Dataset current = train;
    for (auto& s : steps) {
        s->fit(current);
        current = s->apply(current);
    }
    estimator->fit(current, target);
}

Dataset Pipeline::transform_all(const Dataset& d) const {
    Dataset current = d;
    for (const auto& s : steps) current = s->apply(current);
    return current;
}

std::vector<int> Pipeline::predict_class(const Dataset& d) const {
    return estimator->predict_class(transform_all(d));
}

std::vector<double> Pipeline::predict_value(const Dataset& d) const {
    return estimator->predict_value(transform_all(d));
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> stratified_kfold(
    const std::vector<int>& labels, int folds, uint64_t seed) {
    if (folds < 2) throw ValidationError("fold count must be >= 2");
    const int n = static_cast<int>(labels.size());
    if (folds > n) throw ValidationError("more folds than rows");

    int n_strata = 0;
    for (int c : labels) n_strata = std::max(n_strata, c + 1);
    std::vector<std::vector<int>> strata(n_strata);
    for (int i = 0; i < n; ++i) {
        if (labels[i] < 0) throw ValidationError("negative stratum code");
        strata[labels[i]].push_back(i);
    }

    std::vector<std::vector<int>> fold_members(folds);
    int start = 0;  // rotates so overall fold sizes stay balanced
    for (int s = 0; s < n_strata; ++s) {
        auto& members = strata[s];
        if (members.empty()) continue;
        if (static_cast<int>(members.size()) < folds)
            throw ValidationError("stratum " + std::to_string(s) + " has " +
                                  std::to_string(members.size()) + " rows, fewer than " +
                                  std::to_string(folds) + " folds");
        Rng rng(derive_seed(seed, static_cast<uint64_t>(s)));
        rng.shuffle(members);
        for (size_t j = 0; j < members.size(); ++j)
            fold_members[(start + static_cast<int>(j)) % folds].push_back(members[j]);
        start = (start + static_cast<int>(members.size() % folds)) % folds;
    }

    std::vector<std::pair<std::vector<int>, std::vector<int>>> out(folds);
    for (int f = 0; f < folds; ++f) {
        std::sort(fold_members[f].begin(), fold_members[f].end());
        out[f].second = fold_members[f];
        for (int g = 0; g < folds; ++g) {
            if (g == f) continue;
            out[f].first.insert(out[f].first.end(), fold_members[g].begin(), fold_members[g].end());
        }
        std::sort(out[f].first.begin(), out[f].first.end());
    }
    return out;
}

CvResult run_cv(const Pipeline& prototype, const Dataset& d, const TargetSpec& target,
                const CvScheme& scheme, Metric metric, int threads) {
    if (scheme.folds < 2) throw ValidationError("fold count must be >= 2");
    if (scheme.repetitions < 1) throw ValidationError("repetition count must be >= 1");
    if (!prototype.estimator) throw ValidationError("pipeline needs exactly one estimator");

    const bool classification = metric == Metric::balanced_accuracy;
    if (classification != prototype.estimator->is_classifier())
        throw ValidationError("metric does not match the estimator task");

    std::vector<int> strata;
    if (scheme.stratify_by.empty()) {
        strata.assign(d.n(), 0);
    } else {
        int unused = 0;
        strata = target_codes(d, scheme.stratify_by, unused);
    }

    int n_classes = 0;
    std::vector<int> class_labels;
    Eigen::VectorXd numeric_labels;
    if (classification)
        class_labels = target_codes(d, target.column, n_classes);
    else
        numeric_labels = numeric_target(d, target.column);

    const int reps = scheme.repetitions;
    const int folds = scheme.folds;
    CvResult result;
    result.samples.values.resize(reps, folds);
    result.samples.metric =
        classification ? std::string("balanced_accuracy") : std::string("mean_absolute_error");

    struct CellPredictions {
        std::vector<int> actual, predicted;
    };
    std::vector<CellPredictions> cells(classification ? static_cast<size_t>(reps) * folds : 0);

    // One work item per repetition: fold index sets must come from one
    // shuffle, and repetitions dominate the available parallelism.
    parallel_for(static_cast<size_t>(reps), threads, [&](size_t rep) {
        const uint64_t rep_seed = scheme.seed + rep;
        auto splits = stratified_kfold(strata, folds, rep_seed);
        for (int f = 0; f < folds; ++f) {
            const auto& [train_idx, test_idx] = splits[f];
            Dataset train = d.subset(train_idx);
            Dataset test = d.subset(test_idx);
            Pipeline pipeline = prototype.clone_unfitted();
            double value = 0.0;
            try {
                pipeline.fit(train, target);
                if (classification) {
                    std::vector<int> predicted = pipeline.predict_class(test);
                    std::vector<int> actual(test_idx.size());
                    for (size_t i = 0; i < test_idx.size(); ++i) actual[i] = class_labels[test_idx[i]];
                    value = balanced_accuracy(actual, predicted, n_classes);
                    auto& cell = cells[rep * folds + f];
                    cell.actual = std::move(actual);
                    cell.predicted = std::move(predicted);
                } else {
                    std::vector<double> predicted = pipeline.predict_value(test);
                    std::vector<double> actual(test_idx.size());
                    for (size_t i = 0; i < test_idx.size(); ++i)
                        actual[i] = numeric_labels[test_idx[i]];
                    value = mean_absolute_error(actual, predicted);
                }
            } catch (const ValidationError& e) {
                throw ValidationError("repetition " + std::to_string(rep) + ", fold " +
                                      std::to_string(f) + ": " + e.what());
            }
            result.samples.values(static_cast<int>(rep), f) = value;
        }
    });

    if (classification) {
        std::vector<std::string> names;
        if (target.column == "site")
            names = d.site_registry();
        else
            names = d.covariate(target.column).levels;
        ConfusionMatrix confusion = ConfusionMatrix::zero(names);
        for (const auto& cell : cells) confusion.add(cell.actual, cell.predicted);
        result.confusion = std::move(confusion);
    }
    return result;
}

}  // namespace harmonize
