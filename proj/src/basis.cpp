#include "harmonize/basis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace harmonize {

namespace {

// Type-7 quantile (linear interpolation) of sorted values.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    const size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = p * static_cast<double>(n - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Basis values of all cubic B-splines at x, where x must lie inside the
// knot range. De Boor recursion over degrees 0..3.
std::vector<double> bspline_values_inside(const std::vector<double>& knots, double x) {
    const int q = static_cast<int>(knots.size()) - 4;  // number of cubic basis functions
    std::vector<double> deg0(knots.size() - 1, 0.0);
    // Half-open spans, except the last non-empty span is closed on the right.
    int last_span = -1;
    for (size_t j = 0; j + 1 < knots.size(); ++j)
        if (knots[j] < knots[j + 1]) last_span = static_cast<int>(j);
    for (size_t j = 0; j + 1 < knots.size(); ++j) {
        const bool inside = (x >= knots[j] && x < knots[j + 1]) ||
                            (static_cast<int>(j) == last_span && x == knots[j + 1]);
        deg0[j] = inside ? 1.0 : 0.0;
    }
    std::vector<double> prev = deg0;
    for (int p = 1; p <= 3; ++p) {
        std::vector<double> cur(knots.size() - 1 - p, 0.0);
        for (size_t i = 0; i < cur.size(); ++i) {
            double left = 0.0, right = 0.0;
            const double den_l = knots[i + p] - knots[i];
            const double den_r = knots[i + p + 1] - knots[i + 1];
            if (den_l > 0.0) left = (x - knots[i]) / den_l * prev[i];
            if (den_r > 0.0) right = (knots[i + p + 1] - x) / den_r * prev[i + 1];
            cur[i] = left + right;
        }
        prev = std::move(cur);
    }
    prev.resize(q);
    return prev;
}

// Derivatives of all cubic basis functions at x (x inside knot range):
// B'_{i,3} = 3 [ B_{i,2}/(t_{i+3}-t_i) - B_{i+1,2}/(t_{i+4}-t_{i+1}) ].
std::vector<double> bspline_derivs_inside(const std::vector<double>& knots, double x) {
    const int q = static_cast<int>(knots.size()) - 4;
    // Quadratic basis values over the same knot vector.
    std::vector<double> deg0(knots.size() - 1, 0.0);
    int last_span = -1;
    for (size_t j = 0; j + 1 < knots.size(); ++j)
        if (knots[j] < knots[j + 1]) last_span = static_cast<int>(j);
    for (size_t j = 0; j + 1 < knots.size(); ++j) {
        const bool inside = (x >= knots[j] && x < knots[j + 1]) ||
                            (static_cast<int>(j) == last_span && x == knots[j + 1]);
        deg0[j] = inside ? 1.0 : 0.0;
    }
    std::vector<double> prev = deg0;
    for (int p = 1; p <= 2; ++p) {
        std::vector<double> cur(knots.size() - 1 - p, 0.0);
        for (size_t i = 0; i < cur.size(); ++i) {
            double left = 0.0, right = 0.0;
            const double den_l = knots[i + p] - knots[i];
            const double den_r = knots[i + p + 1] - knots[i + 1];
            if (den_l > 0.0) left = (x - knots[i]) / den_l * prev[i];
            if (den_r > 0.0) right = (knots[i + p + 1] - x) / den_r * prev[i + 1];
            cur[i] = left + right;
        }
        prev = std::move(cur);
    }
    std::vector<double> quad = std::move(prev);  // size knots.size() - 3
    std::vector<double> d(q, 0.0);
    for (int i = 0; i < q; ++i) {
        double a = 0.0, b = 0.0;
        const double den_a = knots[i + 3] - knots[i];
        const double den_b = knots[i + 4] - knots[i + 1];
        if (den_a > 0.0) a = quad[i] / den_a;
        if (den_b > 0.0) b = quad[i + 1] / den_b;
        d[i] = 3.0 * (a - b);
    }
    return d;
}

}  // namespace

std::vector<double> cubic_bspline_row(const std::vector<double>& knots, double x) {
    const double lo = knots.front();
    const double hi = knots.back();
    if (x >= lo && x <= hi) return bspline_values_inside(knots, x);
    const double edge = x < lo ? lo : hi;
    std::vector<double> base = bspline_values_inside(knots, edge);
    std::vector<double> slope = bspline_derivs_inside(knots, edge);
    for (size_t i = 0; i < base.size(); ++i) base[i] += slope[i] * (x - edge);
    return base;
}

CovariateModelSpec CovariateModelSpec::parse(const std::string& text) {
    CovariateModelSpec spec;
    if (text.empty()) return spec;
    std::set<std::string> seen;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        start = comma == std::string::npos ? text.size() + 1 : comma + 1;
        if (item.empty()) throw ValidationError("empty covariate term in '" + text + "'");
        CovariateTerm term;
        size_t colon = item.find(':');
        term.covariate = item.substr(0, colon == std::string::npos ? item.size() : colon);
        if (!seen.insert(term.covariate).second)
            throw ValidationError("covariate '" + term.covariate + "' listed twice");
        if (colon != std::string::npos) {
            std::string basis = item.substr(colon + 1);
            if (basis == "linear") {
                term.basis = BasisKind::linear;
            } else if (basis == "quadratic") {
                term.basis = BasisKind::quadratic;
            } else if (basis.rfind("spline", 0) == 0) {
                term.basis = BasisKind::spline;
                std::string df = basis.substr(6);
                term.spline_df = df.empty() ? 5 : std::stoi(df);
                if (term.spline_df < 3) throw ValidationError("spline df must be >= 3");
            } else {
                throw ValidationError("unknown basis '" + basis + "'");
            }
        }
        spec.terms.push_back(std::move(term));
    }
    return spec;
}

std::string CovariateModelSpec::to_text() const {
    std::string out;
    for (const auto& t : terms) {
        if (!out.empty()) out += ',';
        out += t.covariate;
        switch (t.basis) {
            case BasisKind::linear: out += ":linear"; break;
            case BasisKind::quadratic: out += ":quadratic"; break;
            case BasisKind::spline: out += ":spline" + std::to_string(t.spline_df); break;
        }
    }
    return out;
}

int FittedTerm::column_count() const {
    if (kind == ColumnKind::categorical) return static_cast<int>(levels.size()) - 1;
    switch (basis) {
        case BasisKind::linear: return 1;
        case BasisKind::quadratic: return 2;
        case BasisKind::spline: return spline_df;
    }
    return 0;
}

CovariateDesign CovariateDesign::fit(const Dataset& d, const CovariateModelSpec& spec) {
    CovariateDesign design;
    for (const auto& term : spec.terms) {
        const CovariateColumn& col = d.covariate(term.covariate);
        FittedTerm fitted;
        fitted.covariate = term.covariate;
        fitted.kind = col.kind;
        if (col.kind == ColumnKind::categorical) {
            fitted.levels = col.levels;
            if (fitted.levels.size() < 2)
                throw ValidationError("categorical covariate '" + term.covariate +
                                      "' has a single level");
        } else {
            fitted.basis = term.basis;
            if (term.basis == BasisKind::spline) {
                if (term.spline_df < 3) throw ValidationError("spline df must be >= 3");
                fitted.spline_df = term.spline_df;
                std::vector<double> sorted = col.numeric;
                std::sort(sorted.begin(), sorted.end());
                const double lo = sorted.front();
                const double hi = sorted.back();
                if (!(lo < hi))
                    throw ValidationError("covariate '" + term.covariate +
                                          "' is constant; spline basis is singular");
                // df columns after dropping the leading basis function:
                // df - 3 interior knots at training quantiles.
                const int interior = term.spline_df - 3;
                std::vector<double> knots(4, lo);
                for (int j = 1; j <= interior; ++j)
                    knots.push_back(quantile_sorted(sorted, static_cast<double>(j) /
                                                                static_cast<double>(interior + 1)));
                knots.insert(knots.end(), 4, hi);
                fitted.knots = std::move(knots);
            }
        }
        design.terms.push_back(std::move(fitted));
    }
    return design;
}

int CovariateDesign::column_count() const {
    int q = 0;
    for (const auto& t : terms) q += t.column_count();
    return q;
}

Eigen::MatrixXd CovariateDesign::evaluate(const Dataset& d) const {
    const int n = d.n();
    Eigen::MatrixXd out(n, column_count());
    int offset = 0;
    for (const auto& term : terms) {
        const CovariateColumn& col = d.covariate(term.covariate);
        if (col.kind != term.kind)
            throw ValidationError("covariate '" + term.covariate + "' changed kind between fit and transform");
        const int w = term.column_count();
        if (term.kind == ColumnKind::categorical) {
            for (int r = 0; r < n; ++r) {
                const std::string& value = col.levels[col.codes[r]];
                auto it = std::find(term.levels.begin(), term.levels.end(), value);
                if (it == term.levels.end())
                    throw ValidationError("unseen level '" + value + "' of covariate '" +
                                          term.covariate + "'");
                const int idx = static_cast<int>(it - term.levels.begin());
                for (int j = 0; j < w; ++j) out(r, offset + j) = (idx == j + 1) ? 1.0 : 0.0;
            }
        } else if (term.basis == BasisKind::linear) {
            for (int r = 0; r < n; ++r) out(r, offset) = col.numeric[r];
        } else if (term.basis == BasisKind::quadratic) {
            for (int r = 0; r < n; ++r) {
                out(r, offset) = col.numeric[r];
                out(r, offset + 1) = col.numeric[r] * col.numeric[r];
            }
        } else {
            for (int r = 0; r < n; ++r) {
                std::vector<double> row = cubic_bspline_row(term.knots, col.numeric[r]);
                // Drop the first basis function; the remaining df span the
                // non-constant part.
                for (int j = 0; j < w; ++j) out(r, offset + j) = row[j + 1];
            }
        }
        offset += w;
    }
    return out;
}

}  // namespace harmonize
