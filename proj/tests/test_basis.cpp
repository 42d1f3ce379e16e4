#include <doctest.h>

#include <cmath>

#include "harmonize/basis.hpp"

using namespace harmonize;

namespace {

Dataset one_covariate(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<std::string> ids;
    std::vector<int> codes(n, 0);
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(n, 1);
    for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    CovariateColumn age;
    age.name = "age";
    age.kind = ColumnKind::numeric;
    age.numeric = x;
    return Dataset(ids, feats, {"f1"}, codes, {"s0"}, {age});
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * i / (n - 1);
    return x;
}

}  // namespace

TEST_CASE("covariate spec parsing") {
    CovariateModelSpec spec = CovariateModelSpec::parse("age:spline5,sex");
    REQUIRE(spec.terms.size() == 2);
    CHECK(spec.terms[0].covariate == "age");
    CHECK(spec.terms[0].basis == BasisKind::spline);
    CHECK(spec.terms[0].spline_df == 5);
    CHECK(spec.terms[1].covariate == "sex");
    CHECK(spec.terms[1].basis == BasisKind::linear);

    CHECK(CovariateModelSpec::parse("").terms.empty());
    CHECK(CovariateModelSpec::parse("age:quadratic").terms[0].basis == BasisKind::quadratic);
    CHECK(CovariateModelSpec::parse("age:spline").terms[0].spline_df == 5);
    CHECK_THROWS_AS(CovariateModelSpec::parse("age,age"), ValidationError);
    CHECK_THROWS_AS(CovariateModelSpec::parse("age:cubic"), ValidationError);
    CHECK_THROWS_AS(CovariateModelSpec::parse("age:spline2"), ValidationError);
    CHECK(CovariateModelSpec::parse("age:spline5,sex").to_text() == "age:spline5,sex:linear");
}

TEST_CASE("cubic b-spline basis sums to one inside the knot range") {
    Dataset d = one_covariate(grid(0.0, 10.0, 50));
    CovariateDesign design = CovariateDesign::fit(d, CovariateModelSpec::parse("age:spline6"));
    const auto& knots = design.terms[0].knots;
    REQUIRE(knots.size() == 11);  // 4 boundary copies each side + (df - 3) interior
    for (double x : {0.0, 0.37, 2.5, 5.0, 9.99, 10.0}) {
        auto row = cubic_bspline_row(knots, x);
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("spline extrapolates linearly beyond the boundary knots") {
    Dataset d = one_covariate(grid(0.0, 10.0, 50));
    CovariateDesign design = CovariateDesign::fit(d, CovariateModelSpec::parse("age:spline5"));
    const auto& knots = design.terms[0].knots;
    // Values at hi + t must be affine in t: check second differences vanish.
    auto r1 = cubic_bspline_row(knots, 11.0);
    auto r2 = cubic_bspline_row(knots, 12.0);
    auto r3 = cubic_bspline_row(knots, 13.0);
    for (size_t j = 0; j < r1.size(); ++j)
        CHECK(std::abs((r3[j] - r2[j]) - (r2[j] - r1[j])) < 1e-12);
    // And continuity at the boundary.
    auto at = cubic_bspline_row(knots, 10.0);
    auto just_out = cubic_bspline_row(knots, 10.0 + 1e-9);
    for (size_t j = 0; j < at.size(); ++j) CHECK(std::abs(at[j] - just_out[j]) < 1e-7);
}

TEST_CASE("spline design has df columns with interior knots at quantiles") {
    Dataset d = one_covariate(grid(0.0, 9.0, 10));  // 0,1,...,9
    CovariateDesign design = CovariateDesign::fit(d, CovariateModelSpec::parse("age:spline5"));
    CHECK(design.column_count() == 5);
    const auto& knots = design.terms[0].knots;
    REQUIRE(knots.size() == 10);  // 4 + 2 interior + 4
    CHECK(knots[4] == doctest::Approx(3.0));  // quantile 1/3 of 0..9
    CHECK(knots[5] == doctest::Approx(6.0));  // quantile 2/3
}

TEST_CASE("quadratic basis evaluates x and x squared") {
    Dataset d = one_covariate({1.0, 2.0, 3.0});
    CovariateDesign design = CovariateDesign::fit(d, CovariateModelSpec::parse("age:quadratic"));
    Eigen::MatrixXd m = design.evaluate(d);
    REQUIRE(m.cols() == 2);
    CHECK(m(2, 0) == 3.0);
    CHECK(m(2, 1) == 9.0);
}

TEST_CASE("constant covariate cannot carry a spline basis") {
    Dataset d = one_covariate({4.0, 4.0, 4.0});
    CHECK_THROWS_AS(CovariateDesign::fit(d, CovariateModelSpec::parse("age:spline5")),
                    ValidationError);
}

TEST_CASE("categorical covariates one-hot with reference level dropped") {
    std::vector<std::string> ids = {"a", "b", "c"};
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(3, 1);
    CovariateColumn sex;
    sex.name = "sex";
    sex.kind = ColumnKind::categorical;
    sex.levels = {"F", "M"};
    sex.codes = {0, 1, 1};
    Dataset d(ids, feats, {"f1"}, {0, 0, 0}, {"s0"}, {sex});

    CovariateDesign design = CovariateDesign::fit(d, CovariateModelSpec::parse("sex"));
    Eigen::MatrixXd m = design.evaluate(d);
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == 0.0);
    CHECK(m(1, 0) == 1.0);

    // Unseen level at evaluation time is an error.
    CovariateColumn sex2 = sex;
    sex2.levels = {"F", "M", "X"};
    sex2.codes = {0, 1, 2};
    Dataset d2(ids, feats, {"f1"}, {0, 0, 0}, {"s0"}, {sex2});
    CHECK_THROWS_AS(design.evaluate(d2), ValidationError);
}
