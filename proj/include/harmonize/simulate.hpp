#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "harmonize/dataset.hpp"

namespace harmonize {

/// Multicenter feature generator: per-feature quadratic age trend plus an
/// additive per-(site, feature) location effect and a multiplicative
/// inverse-gamma scale effect on the residual noise.
struct SimulationConfig {
    int sites = 3;                       // k
    int subjects_per_site = 25;          // n
    int feature_count = 11;              // V
    std::vector<double> alpha = {2.5};   // per feature, or one value broadcast
    double beta1 = -0.0009;              // linear age coefficient
    double beta2 = -0.00005;             // quadratic age coefficient
    double age_min = 20.0;
    double age_max = 90.0;
    double gamma_sd = 0.1;               // sd of site location effects
    std::vector<double> inv_gamma_shapes;  // per site; empty -> preset_shapes(sites)
    double inv_gamma_scale = 50.0;
    bool unit_scale = false;             // delta fixed to 1 (degenerate shapes -> infinity)
    double epsilon_sd = 0.1;             // residual sd
    uint64_t seed = 0;

    void validate() const;
};

struct SimulationTruth {
    Eigen::MatrixXd gamma;  // k x V location effects
    Eigen::MatrixXd delta;  // k x V scale effects
};

struct SimulatedData {
    Dataset dataset;
    SimulationTruth truth;
};

/// Deterministic per seed; site blocks draw from per-site derived streams so
/// parallel generation cannot reorder values.
SimulatedData simulate_dataset(const SimulationConfig& config);

/// Inverse-gamma shape sets used in the reference experiments.
std::vector<double> preset_shapes(int sites);

/// "ct-k36-n25" / "fd-k3-n250" style presets: feature kind x k x n. The two
/// kinds differ only in the baseline level alpha.
SimulationConfig make_preset(const std::string& name, uint64_t seed);
std::vector<std::string> preset_names();

}  // namespace harmonize
