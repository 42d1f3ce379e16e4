#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "harmonize/dataset.hpp"

namespace harmonize {

enum class BasisKind { linear, quadratic, spline };

struct CovariateTerm {
    std::string covariate;
    BasisKind basis = BasisKind::linear;
    int spline_df = 5;
};

/// Covariate model for the harmonizer: each numeric covariate enters with a
/// linear, quadratic or cubic B-spline basis; categorical covariates are
/// always one-hot expanded with the first (sorted) level as reference.
struct CovariateModelSpec {
    std::vector<CovariateTerm> terms;

    /// Parses "age:spline5,sex" style text: `name[:linear|:quadratic|:splineN]`.
    static CovariateModelSpec parse(const std::string& text);
    std::string to_text() const;
};

/// One fitted expansion. For splines the full knot vector (boundary knots
/// repeated four times) is stored; evaluation extrapolates linearly beyond
/// the boundary knots. For categoricals the training levels are stored and
/// unseen levels are an error at evaluation time.
struct FittedTerm {
    std::string covariate;
    ColumnKind kind = ColumnKind::numeric;
    BasisKind basis = BasisKind::linear;
    int spline_df = 0;
    std::vector<double> knots;
    std::vector<std::string> levels;

    int column_count() const;
};

/// Fitted covariate design: deterministic column layout, no intercept column
/// (the caller's site block spans the constant). The leading B-spline basis
/// function is dropped for the same reason.
struct CovariateDesign {
    std::vector<FittedTerm> terms;

    static CovariateDesign fit(const Dataset& d, const CovariateModelSpec& spec);
    int column_count() const;
    Eigen::MatrixXd evaluate(const Dataset& d) const;
};

/// All cubic B-spline basis values at x for the given knot vector
/// (values of basis functions 0..q-1 where q = knots.size() - 4).
/// Linear extrapolation outside [knots.front(), knots.back()].
std::vector<double> cubic_bspline_row(const std::vector<double>& knots, double x);

}  // namespace harmonize
