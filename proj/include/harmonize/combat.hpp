#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "harmonize/basis.hpp"
#include "harmonize/dataset.hpp"

namespace harmonize {

/// Per-site empirical Bayes hyperparameters: normal prior on the location
/// effect, inverse-gamma prior on the squared scale effect. Estimated by
/// method of moments across features.
struct EbSiteHyperparams {
    double gamma_bar = 0.0;  // prior mean of site location
    double tau2 = 0.0;       // prior variance of site location
    double lambda = 0.0;     // inverse-gamma shape
    double theta = 0.0;      // inverse-gamma scale
};

/// Fitted location/scale harmonization model. Immutable once fitted; one
/// model may serve concurrent transform calls.
struct HarmonizationModel {
    std::vector<std::string> site_registry;   // sites seen during fit
    std::vector<std::string> feature_names;
    CovariateDesign design;                   // stored basis (knots, levels)
    Eigen::MatrixXd covariate_coefficients;   // q x V
    Eigen::VectorXd grand_means;              // V
    Eigen::VectorXd pooled_scale;             // V, residual sd pooled over sites
    Eigen::MatrixXd site_location;            // k x V (additive, standardized units)
    Eigen::MatrixXd site_scale;               // k x V (multiplicative, > 0)
    std::vector<EbSiteHyperparams> eb_hyperparams;  // k entries when eb_enabled
    bool eb_enabled = true;
    /// Per-site fixed-point residual trace (diagnostic; not serialized).
    std::vector<std::vector<double>> eb_residual_history;

    int site_count() const { return static_cast<int>(site_registry.size()); }
    int feature_count() const { return static_cast<int>(feature_names.size()); }
    int site_index(const std::string& name) const;  // -1 when unseen
};

struct CombatOptions {
    bool eb = true;
    double eb_tolerance = 1e-6;
    int eb_max_iterations = 200;
};

/// Learns the harmonization model on training data only: least-squares fit of
/// grand mean + covariate basis + site indicators (size-weighted sum of site
/// effects constrained to zero), standardization by the pooled residual sd
/// (denominator n), per-site moment estimates, and optional parametric
/// empirical Bayes shrinkage via the inverse-gamma/normal fixed point.
HarmonizationModel combat_fit(const Dataset& train, const CovariateModelSpec& covariates,
                              const CombatOptions& options = {});

/// Applies a fitted model: standardize with the stored parameters, remove the
/// site location effect, divide by the site scale, restore mean structure.
/// Never reads feature values of `data` to update any parameter.
Eigen::MatrixXd combat_transform(const HarmonizationModel& model, const Dataset& data);

/// Convenience wrapper returning a Dataset with harmonized features.
Dataset combat_apply(const HarmonizationModel& model, const Dataset& data);

/// Lossless JSON round-trip of a fitted model.
void export_model(const HarmonizationModel& model, const std::string& path);
HarmonizationModel import_model(const std::string& path);

std::string model_to_json(const HarmonizationModel& model);
HarmonizationModel model_from_json(const std::string& text);

}  // namespace harmonize
