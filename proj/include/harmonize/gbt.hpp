#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"

namespace harmonize {

/// Hyperparameters following the XGBoost 0.90 native defaults.
struct GbtParams {
    int n_rounds = 100;
    double learning_rate = 0.3;
    int max_depth = 6;
    double min_child_weight = 1.0;
    double l2_lambda = 1.0;
    double subsample = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

/// Axis-aligned regression tree in flat-array form. feature == -1 marks a
/// leaf; rows with x[feature] < threshold go left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    double predict_row(const double* x) const;
};

/// Boosted-tree model: per-round trees (one per class for multiclass
/// softmax), second-order split gain, leaf weights scaled by the learning
/// rate at build time.
struct GbtModel {
    enum class Task { multiclass, regression };
    Task task = Task::regression;
    int n_classes = 0;
    int n_features = 0;
    double base_score = 0.0;
    std::vector<RegressionTree> trees;  // round-major; class-minor for multiclass

    /// Summed margins per class (multiclass) or single column (regression).
    Eigen::MatrixXd decision_margins(const Eigen::MatrixXd& x) const;
    /// Argmax of class margins; ties break toward the lower class index.
    std::vector<int> predict_class(const Eigen::MatrixXd& x) const;
    std::vector<double> predict_value(const Eigen::MatrixXd& x) const;
};

/// One-vs-all softmax boosting. Labels are class codes in [0, n_classes);
/// every declared class must be present.
GbtModel train_classifier(const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes,
                          const GbtParams& params);

/// Squared-error boosting with the base score at the training target mean.
GbtModel train_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const GbtParams& params);

}  // namespace harmonize
