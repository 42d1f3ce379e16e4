#include <doctest.h>

#include <cmath>
#include <fstream>

#include "harmonize/combat.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/simulate.hpp"

using namespace harmonize;

namespace {

Dataset table(const std::vector<int>& sites, int k, const Eigen::MatrixXd& y,
              const std::vector<double>& age = {}) {
    const int n = static_cast<int>(sites.size());
    std::vector<std::string> ids, registry, names;
    for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    for (int s = 0; s < k; ++s) registry.push_back("site" + std::to_string(s));
    for (int f = 0; f < y.cols(); ++f) names.push_back("f" + std::to_string(f));
    std::vector<CovariateColumn> covs;
    if (!age.empty()) {
        CovariateColumn c;
        c.name = "age";
        c.kind = ColumnKind::numeric;
        c.numeric = age;
        covs.push_back(c);
    }
    return Dataset(ids, y, names, sites, registry, covs);
}

}  // namespace

TEST_CASE("single site with no covariates transforms to itself") {
    Rng rng(1);
    const int n = 40;
    Eigen::MatrixXd y(n, 2);
    for (int i = 0; i < n; ++i) {
        y(i, 0) = 5.0 + rng.normal();
        y(i, 1) = -2.0 + 0.5 * rng.normal();
    }
    Dataset d = table(std::vector<int>(n, 0), 1, y);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(d, {}, opt);
    CHECK(m.site_location.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.site_scale.array() - 1.0).abs().maxCoeff() < 1e-12);
    Eigen::MatrixXd out = combat_transform(m, d);
    CHECK((out - y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two-site constant offset: closed-form location/scale algebra") {
    Rng rng(2);
    const int n_per = 60;
    const double offset = 0.8;
    Eigen::MatrixXd y(2 * n_per, 1);
    std::vector<int> sites(2 * n_per);
    for (int i = 0; i < n_per; ++i) {
        const double base = rng.normal(3.0, 0.4);
        y(i, 0) = base;
        sites[i] = 0;
        y(n_per + i, 0) = base + offset;
        sites[n_per + i] = 1;
    }
    Dataset d = table(sites, 2, y);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(d, {}, opt);

    // Location effects differ by offset / sigma.
    const double sigma = m.pooled_scale[0];
    CHECK(m.site_location(1, 0) - m.site_location(0, 0) ==
          doctest::Approx(offset / sigma).epsilon(1e-10));

    // Harmonized site means and variances coincide.
    Eigen::MatrixXd out = combat_transform(m, d);
    double mean_a = 0.0, mean_b = 0.0;
    for (int i = 0; i < n_per; ++i) {
        mean_a += out(i, 0);
        mean_b += out(n_per + i, 0);
    }
    mean_a /= n_per;
    mean_b /= n_per;
    CHECK(std::abs(mean_a - mean_b) < 1e-8);
    double var_a = 0.0, var_b = 0.0;
    for (int i = 0; i < n_per; ++i) {
        var_a += (out(i, 0) - mean_a) * (out(i, 0) - mean_a);
        var_b += (out(n_per + i, 0) - mean_b) * (out(n_per + i, 0) - mean_b);
    }
    CHECK(std::abs(var_a - var_b) / n_per < 1e-8);
}

TEST_CASE("site effect removal on train: standardized harmonized moments") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 50;
    config.feature_count = 4;
    config.seed = 9;
    SimulatedData sim = simulate_dataset(config);
    CombatOptions opt;
    opt.eb = false;
    CovariateModelSpec covs = CovariateModelSpec::parse("age:quadratic");
    HarmonizationModel m = combat_fit(sim.dataset, covs, opt);
    Eigen::MatrixXd out = combat_transform(m, sim.dataset);

    // Standardize the harmonized output with the stored parameters and
    // check per-site moments: means 0, population variances 1.
    Eigen::MatrixXd mean_structure =
        m.design.evaluate(sim.dataset) * m.covariate_coefficients;
    mean_structure.rowwise() += m.grand_means.transpose();
    for (int s = 0; s < 3; ++s) {
        for (int f = 0; f < m.feature_count(); ++f) {
            double sum = 0.0, ss = 0.0;
            int count = 0;
            for (int r = 0; r < sim.dataset.n(); ++r) {
                if (sim.dataset.site_codes()[r] != s) continue;
                const double z = (out(r, f) - mean_structure(r, f)) / m.pooled_scale[f];
                sum += z;
                ss += z * z;
                ++count;
            }
            const double mean = sum / count;
            const double var = ss / count - mean * mean;
            CHECK(std::abs(mean) < 1e-8);
            CHECK(std::abs(var - 1.0) < 1e-8);
        }
    }
}

TEST_CASE("pure covariate signal with no site effect passes through") {
    SimulationConfig config;
    config.sites = 2;
    config.subjects_per_site = 250;
    config.feature_count = 3;
    config.gamma_sd = 0.0;
    config.unit_scale = true;
    config.epsilon_sd = 1e-7;
    config.seed = 5;
    SimulatedData sim = simulate_dataset(config);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(sim.dataset, CovariateModelSpec::parse("age:quadratic"), opt);
    Eigen::MatrixXd out = combat_transform(m, sim.dataset);
    CHECK((out - sim.dataset.features()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("empirical Bayes shrinkage pulls moments toward the priors") {
    SimulationConfig config;
    config.sites = 4;
    config.subjects_per_site = 30;
    config.feature_count = 8;
    config.inv_gamma_shapes = {40.0, 46.0, 52.0, 58.0};
    config.seed = 21;
    SimulatedData sim = simulate_dataset(config);
    CovariateModelSpec covs = CovariateModelSpec::parse("age:quadratic");
    CombatOptions eb_on;
    HarmonizationModel m = combat_fit(sim.dataset, covs, eb_on);
    CombatOptions eb_off;
    eb_off.eb = false;
    HarmonizationModel raw = combat_fit(sim.dataset, covs, eb_off);  // moment estimates

    for (int i = 0; i < m.site_count(); ++i) {
        const EbSiteHyperparams& hp = m.eb_hyperparams[i];
        for (int f = 0; f < m.feature_count(); ++f) {
            const double g_hat = raw.site_location(i, f);
            const double g_star = m.site_location(i, f);
            const double lo = std::min(g_hat, hp.gamma_bar) - 1e-12;
            const double hi = std::max(g_hat, hp.gamma_bar) + 1e-12;
            CHECK(g_star >= lo);
            CHECK(g_star <= hi);

            const double d2_hat = raw.site_scale(i, f) * raw.site_scale(i, f);
            const double d2_star = m.site_scale(i, f) * m.site_scale(i, f);
            // The posterior variance is a convex combination of the
            // residual variance re-centred at gamma* and the prior mean
            // theta/(lambda-1); re-centring shifts the sample moment by
            // (gamma* - gamma_hat)^2, which bounds the overshoot.
            const double prior_mean = hp.theta / (hp.lambda - 1.0);
            const double shift = (g_star - g_hat) * (g_star - g_hat);
            const double d_lo = std::min(d2_hat, prior_mean) - 1e-12;
            const double d_hi = std::max(d2_hat + shift, prior_mean) + 1e-12;
            CHECK(d2_star >= d_lo);
            CHECK(d2_star <= d_hi);
        }
    }
}

TEST_CASE("EB fixed point converges with decreasing residual") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 40;
    config.feature_count = 6;
    config.seed = 33;
    SimulatedData sim = simulate_dataset(config);
    HarmonizationModel m =
        combat_fit(sim.dataset, CovariateModelSpec::parse("age:quadratic"), CombatOptions{});
    REQUIRE(m.eb_residual_history.size() == 3);
    for (const auto& history : m.eb_residual_history) {
        REQUIRE(!history.empty());
        CHECK(history.back() <= 1e-6);
        for (size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1]);
    }
}

TEST_CASE("transform is leakage-free: disjoint batches equal concatenated") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 30;
    config.feature_count = 3;
    config.seed = 14;
    SimulatedData sim = simulate_dataset(config);
    HarmonizationModel m =
        combat_fit(sim.dataset, CovariateModelSpec::parse("age:quadratic"), CombatOptions{});

    SimulationConfig test_config = config;
    test_config.seed = 15;
    SimulatedData test = simulate_dataset(test_config);
    std::vector<int> first_half, second_half, all;
    for (int i = 0; i < test.dataset.n(); ++i) {
        (i % 2 == 0 ? first_half : second_half).push_back(i);
        all.push_back(i);
    }
    Eigen::MatrixXd out_a = combat_transform(m, test.dataset.subset(first_half));
    Eigen::MatrixXd out_b = combat_transform(m, test.dataset.subset(second_half));
    Eigen::MatrixXd out_all = combat_transform(m, test.dataset.subset(all));
    for (size_t i = 0; i < first_half.size(); ++i)
        CHECK((out_all.row(first_half[i]) - out_a.row(i)).cwiseAbs().maxCoeff() == 0.0);
    for (size_t i = 0; i < second_half.size(); ++i)
        CHECK((out_all.row(second_half[i]) - out_b.row(i)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical rows differ across sites, match within a site") {
    Eigen::MatrixXd y(6, 1);
    y << 1.0, 2.0, 1.5, 2.5, 1.2, 2.2;
    Dataset train = table({0, 0, 0, 1, 1, 1}, 2, y);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(train, {}, opt);

    Eigen::MatrixXd probe(3, 1);
    probe << 1.7, 1.7, 1.7;
    Dataset test = table({0, 1, 0}, 2, probe);
    Eigen::MatrixXd out = combat_transform(m, test);
    CHECK(out(0, 0) == out(2, 0));
    CHECK(out(0, 0) != out(1, 0));
}

TEST_CASE("unseen site is a hard error naming the site") {
    Eigen::MatrixXd y(4, 1);
    y << 1.0, 2.0, 1.5, 2.5;
    Dataset train = table({0, 0, 1, 1}, 2, y);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(train, {}, opt);

    Dataset test(std::vector<std::string>{"x1"}, Eigen::MatrixXd::Constant(1, 1, 1.0),
                 {"f0"}, {0}, {"siteX"}, {});
    try {
        combat_transform(m, test);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("siteX") != std::string::npos);
    }
}

TEST_CASE("fit rejects a site with a single subject") {
    Eigen::MatrixXd y(3, 1);
    y << 1.0, 2.0, 3.0;
    Dataset d = table({0, 0, 1}, 2, y);
    CombatOptions opt;
    opt.eb = false;
    CHECK_THROWS_AS(combat_fit(d, {}, opt), ValidationError);
}

TEST_CASE("fit rejects a singular covariate design") {
    Rng rng(3);
    const int n = 20;
    Eigen::MatrixXd y(n, 1);
    std::vector<int> sites(n);
    std::vector<double> age(n);
    for (int i = 0; i < n; ++i) {
        y(i, 0) = rng.normal();
        sites[i] = i % 2;
        age[i] = 4.0;  // constant: collinear with the site intercepts
    }
    Dataset d = table(sites, 2, y, age);
    CombatOptions opt;
    opt.eb = false;
    CHECK_THROWS_AS(combat_fit(d, CovariateModelSpec::parse("age:linear"), opt), ValidationError);
}

TEST_CASE("transform rejects mismatched feature names") {
    Eigen::MatrixXd y(4, 1);
    y << 1.0, 2.0, 1.5, 2.5;
    Dataset train = table({0, 0, 1, 1}, 2, y);
    CombatOptions opt;
    opt.eb = false;
    HarmonizationModel m = combat_fit(train, {}, opt);
    Dataset other(std::vector<std::string>{"a", "b"}, Eigen::MatrixXd::Zero(2, 1), {"other"},
                  {0, 1}, {"site0", "site1"}, {});
    CHECK_THROWS_AS(combat_transform(m, other), ValidationError);
}

TEST_CASE("model export/import round-trips transforms exactly") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 25;
    config.feature_count = 5;
    config.seed = 77;
    SimulatedData sim = simulate_dataset(config);
    HarmonizationModel m =
        combat_fit(sim.dataset, CovariateModelSpec::parse("age:spline5"), CombatOptions{});
    const std::string path = "/tmp/harmonize_test_model.json";
    export_model(m, path);
    HarmonizationModel loaded = import_model(path);

    CHECK(loaded.site_registry == m.site_registry);
    CHECK(loaded.feature_names == m.feature_names);
    REQUIRE(loaded.design.terms.size() == m.design.terms.size());
    CHECK(loaded.design.terms[0].knots == m.design.terms[0].knots);

    std::vector<int> probe_rows;
    for (int i = 0; i < 10; ++i) probe_rows.push_back(i * 7);
    Dataset probe = sim.dataset.subset(probe_rows);
    Eigen::MatrixXd a = combat_transform(m, probe);
    Eigen::MatrixXd b = combat_transform(loaded, probe);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // exact to the last bit
}

TEST_CASE("corrupt model file raises a structured parse error") {
    const std::string path = "/tmp/harmonize_test_corrupt.json";
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(import_model(path), ValidationError);
    std::ofstream(path) << "{\"format_version\": 99}";
    CHECK_THROWS_AS(import_model(path), ValidationError);
    std::ofstream(path) << "{\"format_version\": 1}";
    CHECK_THROWS_AS(import_model(path), ValidationError);
}

TEST_CASE("zero residual variance is rejected") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(6, 1, 3.25);
    Dataset d = table({0, 0, 0, 1, 1, 1}, 2, y);
    CombatOptions opt;
    opt.eb = false;
    CHECK_THROWS_AS(combat_fit(d, {}, opt), ValidationError);
}
