#include <doctest.h>

#include <cmath>

#include "harmonize/simulate.hpp"

using namespace harmonize;

TEST_CASE("noiseless configuration reproduces the quadratic age model exactly") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 20;
    config.feature_count = 2;
    config.gamma_sd = 0.0;
    config.unit_scale = true;
    config.epsilon_sd = 0.0;
    config.seed = 4;
    SimulatedData sim = simulate_dataset(config);
    const auto& age = sim.dataset.covariate("age").numeric;
    for (int r = 0; r < sim.dataset.n(); ++r) {
        const double x = age[r];
        const double expected = 2.5 + config.beta1 * x + config.beta2 * x * x;
        CHECK(sim.dataset.features()(r, 0) == expected);
        CHECK(sim.dataset.features()(r, 1) == expected);
    }
    CHECK(sim.truth.gamma.cwiseAbs().maxCoeff() == 0.0);
    CHECK((sim.truth.delta.array() == 1.0).all());
}

TEST_CASE("preset shape sets match the published experiments") {
    CHECK(preset_shapes(3) == std::vector<double>{46.0, 51.0, 56.0});
    const auto k10 = preset_shapes(10);
    REQUIRE(k10.size() == 10);
    CHECK(k10.front() == 40.0);
    CHECK(k10.back() == 58.0);
    CHECK(k10[1] - k10[0] == 2.0);
    const auto k36 = preset_shapes(36);
    CHECK(k36.size() == 36);          // exactly 36 shapes
    CHECK(k36.front() == 10.0);
    CHECK(k36.back() == 70.0);
    // The three printed segments.
    CHECK(std::count(k36.begin(), k36.end(), 40.0) == 1);
    CHECK(std::count(k36.begin(), k36.end(), 41.0) == 1);
    CHECK(std::count(k36.begin(), k36.end(), 50.0) == 1);
    CHECK(std::count(k36.begin(), k36.end(), 51.0) == 0);
    CHECK_THROWS_AS(preset_shapes(7), ValidationError);
}

TEST_CASE("inverse-gamma scale effects have means near scale/(shape-1)") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 2;
    config.feature_count = 4000;  // many draws per site for a tight mean
    config.seed = 8;
    SimulatedData sim = simulate_dataset(config);
    const std::vector<double> expected = {50.0 / 45.0, 50.0 / 50.0, 50.0 / 55.0};
    for (int i = 0; i < 3; ++i) {
        const double mean = sim.truth.delta.row(i).mean();
        CHECK(mean == doctest::Approx(expected[i]).epsilon(0.02));
    }
}

TEST_CASE("per-site feature means track alpha + trend + gamma") {
    SimulationConfig config;
    config.sites = 3;
    config.subjects_per_site = 400;
    config.feature_count = 3;
    config.seed = 15;
    SimulatedData sim = simulate_dataset(config);
    const auto& age = sim.dataset.covariate("age").numeric;
    for (int i = 0; i < 3; ++i) {
        for (int f = 0; f < 3; ++f) {
            double mean_y = 0.0, mean_trend = 0.0;
            int count = 0;
            for (int r = 0; r < sim.dataset.n(); ++r) {
                if (sim.dataset.site_codes()[r] != i) continue;
                mean_y += sim.dataset.features()(r, f);
                mean_trend += 2.5 + config.beta1 * age[r] + config.beta2 * age[r] * age[r];
                ++count;
            }
            mean_y /= count;
            mean_trend /= count;
            const double gamma_est = mean_y - mean_trend;
            const double tolerance =
                3.0 * config.epsilon_sd * sim.truth.delta(i, f) / std::sqrt(double(count));
            CHECK(std::abs(gamma_est - sim.truth.gamma(i, f)) < tolerance);
        }
    }
}

TEST_CASE("standardized residual variance sits inside a chi-squared interval") {
    SimulationConfig config;
    config.sites = 2;
    config.subjects_per_site = 500;
    config.inv_gamma_shapes = {46.0, 56.0};
    config.feature_count = 1;
    config.seed = 23;
    SimulatedData sim = simulate_dataset(config);
    const auto& age = sim.dataset.covariate("age").numeric;
    for (int i = 0; i < 2; ++i) {
        double ss = 0.0;
        int count = 0;
        for (int r = 0; r < sim.dataset.n(); ++r) {
            if (sim.dataset.site_codes()[r] != i) continue;
            const double resid = sim.dataset.features()(r, 0) -
                                 (2.5 + config.beta1 * age[r] + config.beta2 * age[r] * age[r]) -
                                 sim.truth.gamma(i, 0);
            ss += resid * resid;
            ++count;
        }
        const double target = sim.truth.delta(i, 0) * sim.truth.delta(i, 0) *
                              config.epsilon_sd * config.epsilon_sd;
        // chi^2_{500} 99% interval: roughly n +- 3.3 sqrt(2n).
        const double low = count - 3.3 * std::sqrt(2.0 * count);
        const double high = count + 3.3 * std::sqrt(2.0 * count);
        CHECK(ss / target > low);
        CHECK(ss / target < high);
    }
}

TEST_CASE("same seed regenerates bit-identical data") {
    SimulationConfig config = make_preset("fd-k10-n25", 99);
    SimulatedData a = simulate_dataset(config);
    SimulatedData b = simulate_dataset(config);
    CHECK(a.dataset.features() == b.dataset.features());
    CHECK(a.dataset.covariate("age").numeric == b.dataset.covariate("age").numeric);
    CHECK(a.truth.gamma == b.truth.gamma);
    CHECK(a.truth.delta == b.truth.delta);
}

TEST_CASE("preset catalog covers 2 kinds x 3 site counts x 4 sizes") {
    const auto names = preset_names();
    CHECK(names.size() == 24);
    SimulationConfig ct = make_preset("ct-k36-n25", 1);
    CHECK(ct.sites == 36);
    CHECK(ct.subjects_per_site == 25);
    CHECK(ct.alpha == std::vector<double>{2.5});
    SimulationConfig fd = make_preset("fd-k3-n250", 1);
    CHECK(fd.alpha == std::vector<double>{2.6});
    CHECK(fd.inv_gamma_shapes.size() == 3);
    CHECK_THROWS_AS(make_preset("xx-k3-n25", 1), ValidationError);
    CHECK_THROWS_AS(make_preset("ct-k5-n25", 1), ValidationError);
}

TEST_CASE("invalid configurations are rejected") {
    SimulationConfig config;
    config.sites = 2;
    config.inv_gamma_shapes = {46.0, 1.5};  // shape <= 2: infinite variance
    CHECK_THROWS_AS(config.validate(), ValidationError);
    SimulationConfig bad_age;
    bad_age.sites = 3;
    bad_age.age_min = 30.0;
    bad_age.age_max = 20.0;
    CHECK_THROWS_AS(bad_age.validate(), ValidationError);
}
