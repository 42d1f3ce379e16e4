#include "harmonize/combat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace harmonize {

using nlohmann::json;

int HarmonizationModel::site_index(const std::string& name) const {
    for (size_t i = 0; i < site_registry.size(); ++i)
        if (site_registry[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

// Maps each row of `data` to a model site index; unseen sites are an error.
std::vector<int> model_site_of_rows(const HarmonizationModel& m, const Dataset& data) {
    std::vector<int> registry_to_model(data.site_registry().size(), -2);
    std::vector<int> out(data.n());
    for (int r = 0; r < data.n(); ++r) {
        const int code = data.site_codes()[r];
        if (registry_to_model[code] == -2)
            registry_to_model[code] = m.site_index(data.site_registry()[code]);
        if (registry_to_model[code] < 0)
            throw ValidationError("site '" + data.site_registry()[code] +
                                  "' was not present when the model was fitted");
        out[r] = registry_to_model[code];
    }
    return out;
}

struct EbFit {
    Eigen::VectorXd gamma_star;   // per feature
    Eigen::VectorXd delta2_star;  // per feature
    std::vector<double> residuals;
};

// Parametric empirical Bayes fixed point for one site. z_site: rows of this site in
// standardized units, gamma_hat/delta2_hat: moment estimates per feature.
EbFit eb_site_fixed_point(const Eigen::MatrixXd& z_site, const Eigen::VectorXd& gamma_hat,
                          const Eigen::VectorXd& delta2_hat, const EbSiteHyperparams& hp,
                          double tolerance, int max_iterations) {
    const int n = static_cast<int>(z_site.rows());
    const int v = static_cast<int>(z_site.cols());
    EbFit fit;
    fit.gamma_star = gamma_hat;
    fit.delta2_star = delta2_hat;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd g_new(v), d_new(v);
        double change = 0.0;
        for (int f = 0; f < v; ++f) {
            const double d_old = fit.delta2_star[f];
            const double g = (hp.tau2 * n * gamma_hat[f] + d_old * hp.gamma_bar) /
                             (hp.tau2 * n + d_old);
            double sum2 = 0.0;
            for (int r = 0; r < n; ++r) {
                const double e = z_site(r, f) - g;
                sum2 += e * e;
            }
            const double d = (0.5 * sum2 + hp.theta) / (0.5 * n + hp.lambda - 1.0);
            // Absolute change on the location, relative on the scale: the
            // location fixed point may legitimately sit at zero.
            change = std::max(change, std::abs(g - fit.gamma_star[f]));
            change = std::max(change, std::abs(d - d_old) / d_old);
            g_new[f] = g;
            d_new[f] = d;
        }
        fit.gamma_star = g_new;
        fit.delta2_star = d_new;
        fit.residuals.push_back(change);
        if (change <= tolerance) return fit;
    }
    throw ValidationError("empirical Bayes iteration did not converge within " +
                          std::to_string(max_iterations) + " iterations");
}

}  // namespace

HarmonizationModel combat_fit(const Dataset& train, const CovariateModelSpec& covariates,
                              const CombatOptions& options) {
    const int n = train.n();
    const int v = train.feature_count();

    // Sites present in the training rows, in registry order.
    std::vector<int> counts(train.site_count(), 0);
    for (int code : train.site_codes()) ++counts[code];
    std::vector<std::string> present;
    std::vector<int> code_to_model(train.site_count(), -1);
    for (int c = 0; c < train.site_count(); ++c) {
        if (counts[c] == 0) continue;
        if (counts[c] < 2)
            throw ValidationError("site '" + train.site_registry()[c] +
                                  "' has a single subject; its variance is undefined");
        code_to_model[c] = static_cast<int>(present.size());
        present.push_back(train.site_registry()[c]);
    }
    const int k = static_cast<int>(present.size());
    std::vector<int> site_of(n);
    std::vector<int> site_n(k, 0);
    for (int r = 0; r < n; ++r) {
        site_of[r] = code_to_model[train.site_codes()[r]];
        ++site_n[site_of[r]];
    }

    HarmonizationModel m;
    m.site_registry = present;
    m.feature_names = train.feature_names();
    m.eb_enabled = options.eb;
    m.design = CovariateDesign::fit(train, covariates);
    const int q = m.design.column_count();

    // Full design: one-hot site block followed by the covariate basis.
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, k + q);
    for (int r = 0; r < n; ++r) design(r, site_of[r]) = 1.0;
    if (q > 0) design.rightCols(q) = m.design.evaluate(train);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < k + q) throw ValidationError("singular covariate design");
    const Eigen::MatrixXd& y = train.features();
    Eigen::MatrixXd coef = qr.solve(y);  // (k+q) x V

    m.covariate_coefficients = q > 0 ? Eigen::MatrixXd(coef.bottomRows(q))
                                     : Eigen::MatrixXd(0, v);

    // Grand mean: site-size-weighted average of the per-site intercepts,
    // which makes the weighted sum of location effects zero.
    Eigen::VectorXd weights(k);
    for (int i = 0; i < k; ++i) weights[i] = static_cast<double>(site_n[i]) / n;
    m.grand_means = coef.topRows(k).transpose() * weights;

    // Pooled residual variance of the full fit, denominator n.
    Eigen::MatrixXd resid = y - design * coef;
    Eigen::VectorXd var_pooled = resid.array().square().colwise().sum() / static_cast<double>(n);
    for (int f = 0; f < v; ++f)
        if (!(var_pooled[f] > 0.0))
            throw ValidationError("feature '" + m.feature_names[f] +
                                  "' has zero pooled residual variance");
    m.pooled_scale = var_pooled.array().sqrt();

    // Standardize: z = (y - alpha - f(X)) / sigma.
    Eigen::MatrixXd z = y;
    if (q > 0) z -= design.rightCols(q) * m.covariate_coefficients;
    z.rowwise() -= m.grand_means.transpose();
    z.array().rowwise() /= m.pooled_scale.transpose().array();

    // Per-site moments of z. Population denominator n_i so that a single
    // site with no covariates transforms to itself exactly.
    Eigen::MatrixXd gamma_hat = Eigen::MatrixXd::Zero(k, v);
    Eigen::MatrixXd delta2_hat = Eigen::MatrixXd::Zero(k, v);
    for (int r = 0; r < n; ++r) gamma_hat.row(site_of[r]) += z.row(r);
    for (int i = 0; i < k; ++i) gamma_hat.row(i) /= static_cast<double>(site_n[i]);
    for (int r = 0; r < n; ++r) {
        Eigen::ArrayXd e = z.row(r).transpose().array() - gamma_hat.row(site_of[r]).transpose().array();
        delta2_hat.row(site_of[r]) += (e * e).matrix().transpose();
    }
    for (int i = 0; i < k; ++i) delta2_hat.row(i) /= static_cast<double>(site_n[i]);
    for (int i = 0; i < k; ++i)
        for (int f = 0; f < v; ++f)
            if (!(delta2_hat(i, f) > 0.0))
                throw ValidationError("site '" + present[i] + "', feature '" + m.feature_names[f] +
                                      "': degenerate (zero) within-site variance");

    if (!options.eb) {
        m.site_location = gamma_hat;
        m.site_scale = delta2_hat.array().sqrt();
        return m;
    }

    if (v < 2)
        throw ValidationError("parametric empirical Bayes needs at least 2 features");

    m.site_location.resize(k, v);
    m.site_scale.resize(k, v);
    m.eb_hyperparams.resize(k);
    for (int i = 0; i < k; ++i) {
        EbSiteHyperparams hp;
        const Eigen::VectorXd g = gamma_hat.row(i);
        const Eigen::VectorXd d2 = delta2_hat.row(i);
        hp.gamma_bar = g.mean();
        hp.tau2 = (g.array() - hp.gamma_bar).square().sum() / (v - 1);
        const double d_mean = d2.mean();
        const double d_var = (d2.array() - d_mean).square().sum() / (v - 1);
        if (!(hp.tau2 > 0.0) || !(d_var > 0.0))
            throw ValidationError("site '" + present[i] +
                                  "': zero between-feature spread; EB hyperparameters undefined");
        hp.lambda = (2.0 * d_var + d_mean * d_mean) / d_var;
        hp.theta = (d_mean * d_var + d_mean * d_mean * d_mean) / d_var;
        m.eb_hyperparams[i] = hp;

        std::vector<int> rows;
        for (int r = 0; r < n; ++r)
            if (site_of[r] == i) rows.push_back(r);
        Eigen::MatrixXd z_site(rows.size(), v);
        for (size_t j = 0; j < rows.size(); ++j) z_site.row(j) = z.row(rows[j]);

        EbFit fit = eb_site_fixed_point(z_site, g, d2, hp, options.eb_tolerance,
                                        options.eb_max_iterations);
        m.site_location.row(i) = fit.gamma_star;
        m.site_scale.row(i) = fit.delta2_star.array().sqrt();
        m.eb_residual_history.push_back(std::move(fit.residuals));
    }
    return m;
}

Eigen::MatrixXd combat_transform(const HarmonizationModel& m, const Dataset& data) {
    if (data.feature_names() != m.feature_names)
        throw ValidationError("feature names do not match the fitted model");
    const std::vector<int> site_of = model_site_of_rows(m, data);

    const int n = data.n();
    const int v = m.feature_count();
    const int q = m.design.column_count();

    Eigen::MatrixXd mean_structure(n, v);
    if (q > 0)
        mean_structure = m.design.evaluate(data) * m.covariate_coefficients;
    else
        mean_structure.setZero();
    mean_structure.rowwise() += m.grand_means.transpose();

    Eigen::MatrixXd out(n, v);
    for (int r = 0; r < n; ++r) {
        const int i = site_of[r];
        for (int f = 0; f < v; ++f) {
            const double z = (data.features()(r, f) - mean_structure(r, f)) / m.pooled_scale[f];
            out(r, f) = (z - m.site_location(i, f)) / m.site_scale(i, f) * m.pooled_scale[f] +
                        mean_structure(r, f);
        }
    }
    return out;
}

Dataset combat_apply(const HarmonizationModel& model, const Dataset& data) {
    return data.with_features(combat_transform(model, data));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out;
    out["rows"] = m.rows();
    out["cols"] = m.cols();
    std::vector<double> values;
    values.reserve(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    out["values"] = values;
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto values = j.at("values").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw ValidationError("model matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    size_t idx = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[idx++];
    return m;
}

const char* basis_name(BasisKind b) {
    switch (b) {
        case BasisKind::linear: return "linear";
        case BasisKind::quadratic: return "quadratic";
        case BasisKind::spline: return "spline";
    }
    return "linear";
}

BasisKind basis_from_name(const std::string& s) {
    if (s == "linear") return BasisKind::linear;
    if (s == "quadratic") return BasisKind::quadratic;
    if (s == "spline") return BasisKind::spline;
    throw ValidationError("unknown basis '" + s + "' in model file");
}

constexpr int kFormatVersion = 1;

}  // namespace

std::string model_to_json(const HarmonizationModel& m) {
    json j;
    j["format_version"] = kFormatVersion;
    j["eb_enabled"] = m.eb_enabled;
    j["site_registry"] = m.site_registry;
    j["feature_names"] = m.feature_names;

    json terms = json::array();
    for (const auto& t : m.design.terms) {
        json jt;
        jt["covariate"] = t.covariate;
        jt["kind"] = t.kind == ColumnKind::categorical ? "categorical" : "numeric";
        jt["basis"] = basis_name(t.basis);
        jt["spline_df"] = t.spline_df;
        jt["knots"] = t.knots;
        jt["levels"] = t.levels;
        terms.push_back(std::move(jt));
    }
    j["design_terms"] = terms;
    j["covariate_coefficients"] = matrix_to_json(m.covariate_coefficients);
    j["grand_means"] = matrix_to_json(m.grand_means);
    j["pooled_scale"] = matrix_to_json(m.pooled_scale);
    j["site_location"] = matrix_to_json(m.site_location);
    j["site_scale"] = matrix_to_json(m.site_scale);
    json eb = json::array();
    for (const auto& hp : m.eb_hyperparams)
        eb.push_back({{"gamma_bar", hp.gamma_bar},
                      {"tau2", hp.tau2},
                      {"lambda", hp.lambda},
                      {"theta", hp.theta}});
    j["eb_hyperparams"] = eb;
    return j.dump(2);
}

HarmonizationModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
            throw ValidationError("unsupported model format_version " + std::to_string(version));
        HarmonizationModel m;
        m.eb_enabled = j.at("eb_enabled").get<bool>();
        m.site_registry = j.at("site_registry").get<std::vector<std::string>>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const auto& jt : j.at("design_terms")) {
            FittedTerm t;
            t.covariate = jt.at("covariate").get<std::string>();
            t.kind = jt.at("kind").get<std::string>() == "categorical" ? ColumnKind::categorical
                                                                       : ColumnKind::numeric;
            t.basis = basis_from_name(jt.at("basis").get<std::string>());
            t.spline_df = jt.at("spline_df").get<int>();
            t.knots = jt.at("knots").get<std::vector<double>>();
            t.levels = jt.at("levels").get<std::vector<std::string>>();
            m.design.terms.push_back(std::move(t));
        }
        m.covariate_coefficients = matrix_from_json(j.at("covariate_coefficients"));
        m.grand_means = matrix_from_json(j.at("grand_means"));
        m.pooled_scale = matrix_from_json(j.at("pooled_scale"));
        m.site_location = matrix_from_json(j.at("site_location"));
        m.site_scale = matrix_from_json(j.at("site_scale"));
        for (const auto& je : j.at("eb_hyperparams")) {
            EbSiteHyperparams hp;
            hp.gamma_bar = je.at("gamma_bar").get<double>();
            hp.tau2 = je.at("tau2").get<double>();
            hp.lambda = je.at("lambda").get<double>();
            hp.theta = je.at("theta").get<double>();
            m.eb_hyperparams.push_back(hp);
        }
        if (m.site_location.rows() != m.site_count() ||
            m.site_scale.rows() != m.site_count() ||
            m.site_location.cols() != m.feature_count())
            throw ValidationError("model matrix dimensions inconsistent with registry");
        if ((m.site_scale.array() <= 0.0).any())
            throw ValidationError("model contains non-positive site scales");
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

void export_model(const HarmonizationModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write model file '" + path + "'");
    out << model_to_json(model) << '\n';
    if (!out) throw ValidationError("write failed for '" + path + "'");
}

HarmonizationModel import_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_json(buffer.str());
}

}  // namespace harmonize
