#include "harmonize/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "harmonize/rng.hpp"

namespace harmonize {

void SimulationConfig::validate() const {
    if (sites < 1) throw ValidationError("site count must be >= 1");
    if (subjects_per_site < 1) throw ValidationError("subjects per site must be >= 1");
    if (feature_count < 1) throw ValidationError("feature count must be >= 1");
    if (alpha.size() != 1 && alpha.size() != static_cast<size_t>(feature_count))
        throw ValidationError("alpha must hold 1 value or one per feature");
    if (!(age_min < age_max)) throw ValidationError("age range must have age_min < age_max");
    if (gamma_sd < 0.0) throw ValidationError("gamma_sd must be >= 0");
    if (epsilon_sd < 0.0) throw ValidationError("epsilon_sd must be >= 0");
    if (!unit_scale) {
        std::vector<double> shapes = inv_gamma_shapes.empty() ? preset_shapes(sites) : inv_gamma_shapes;
        if (shapes.size() != static_cast<size_t>(sites))
            throw ValidationError("need one inverse-gamma shape per site");
        for (double s : shapes)
            if (!(s > 2.0)) throw ValidationError("inverse-gamma shapes must exceed 2");
        if (!(inv_gamma_scale > 0.0)) throw ValidationError("inverse-gamma scale must be positive");
    }
}

std::vector<double> preset_shapes(int sites) {
    std::vector<double> shapes;
    if (sites == 3) {
        shapes = {46.0, 51.0, 56.0};
    } else if (sites == 10) {
        for (double s = 40.0; s <= 58.0; s += 2.0) shapes.push_back(s);
    } else if (sites == 36) {
        for (double s = 10.0; s <= 40.0; s += 2.0) shapes.push_back(s);   // 10, 12, ..., 40
        for (double s = 41.0; s <= 50.0; s += 1.0) shapes.push_back(s);   // 41, 42, ..., 50
        for (double s = 52.0; s <= 70.0; s += 2.0) shapes.push_back(s);   // 52, 54, ..., 70
    } else {
        throw ValidationError("no preset shape set for k = " + std::to_string(sites) +
                              "; provide inv_gamma_shapes explicitly");
    }
    return shapes;
}

SimulatedData simulate_dataset(const SimulationConfig& config) {
    config.validate();
    const int k = config.sites;
    const int n_per = config.subjects_per_site;
    const int v = config.feature_count;
    const int n = k * n_per;

    std::vector<double> alpha(v);
    for (int f = 0; f < v; ++f)
        alpha[f] = config.alpha.size() == 1 ? config.alpha[0] : config.alpha[f];
    const std::vector<double> shapes =
        config.unit_scale ? std::vector<double>()
                          : (config.inv_gamma_shapes.empty() ? preset_shapes(k) : config.inv_gamma_shapes);

    SimulationTruth truth;
    truth.gamma.resize(k, v);
    truth.delta.resize(k, v);

    std::vector<std::string> ids(n);
    std::vector<int> site_codes(n);
    std::vector<std::string> registry(k);
    std::vector<double> age(n);
    Eigen::MatrixXd features(n, v);

    char buf[32];
    for (int i = 0; i < k; ++i) {
        std::snprintf(buf, sizeof(buf), "site%02d", i + 1);
        registry[i] = buf;
        Rng rng(derive_seed(config.seed, static_cast<uint64_t>(i)));
        for (int f = 0; f < v; ++f)
            truth.gamma(i, f) = config.gamma_sd > 0.0 ? rng.normal(0.0, config.gamma_sd) : 0.0;
        for (int f = 0; f < v; ++f)
            truth.delta(i, f) =
                config.unit_scale ? 1.0 : rng.inverse_gamma(shapes[i], config.inv_gamma_scale);
        for (int j = 0; j < n_per; ++j) {
            const int row = i * n_per + j;
            std::snprintf(buf, sizeof(buf), "s%02d_%04d", i + 1, j + 1);
            ids[row] = buf;
            site_codes[row] = i;
            const double x = rng.uniform(config.age_min, config.age_max);
            age[row] = x;
            for (int f = 0; f < v; ++f) {
                const double eps = config.epsilon_sd > 0.0 ? rng.normal(0.0, config.epsilon_sd) : 0.0;
                features(row, f) = alpha[f] + config.beta1 * x + config.beta2 * x * x +
                                   truth.gamma(i, f) + truth.delta(i, f) * eps;
            }
        }
    }

    std::vector<std::string> feature_names(v);
    for (int f = 0; f < v; ++f) {
        std::snprintf(buf, sizeof(buf), "f%02d", f + 1);
        feature_names[f] = buf;
    }
    CovariateColumn age_col;
    age_col.name = "age";
    age_col.kind = ColumnKind::numeric;
    age_col.numeric = std::move(age);

    Dataset dataset(std::move(ids), std::move(features), std::move(feature_names),
                    std::move(site_codes), std::move(registry), {std::move(age_col)});
    return SimulatedData{std::move(dataset), std::move(truth)};
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const char* kind : {"ct", "fd"})
        for (int k : {3, 10, 36})
            for (int n : {25, 50, 100, 250})
                names.push_back(std::string(kind) + "-k" + std::to_string(k) + "-n" +
                                std::to_string(n));
    return names;
}

SimulationConfig make_preset(const std::string& name, uint64_t seed) {
    double alpha = 0.0;
    std::string rest;
    if (name.rfind("ct-", 0) == 0) {
        alpha = 2.5;
        rest = name.substr(3);
    } else if (name.rfind("fd-", 0) == 0) {
        alpha = 2.6;
        rest = name.substr(3);
    } else {
        throw ValidationError("unknown preset '" + name + "'");
    }
    int k = 0, n = 0;
    if (std::sscanf(rest.c_str(), "k%d-n%d", &k, &n) != 2)
        throw ValidationError("unknown preset '" + name + "'");
    const bool k_ok = k == 3 || k == 10 || k == 36;
    const bool n_ok = n == 25 || n == 50 || n == 100 || n == 250;
    if (!k_ok || !n_ok) throw ValidationError("unknown preset '" + name + "'");

    SimulationConfig config;
    config.sites = k;
    config.subjects_per_site = n;
    config.alpha = {alpha};
    config.inv_gamma_shapes = preset_shapes(k);
    config.seed = seed;
    return config;
}

}  // namespace harmonize
