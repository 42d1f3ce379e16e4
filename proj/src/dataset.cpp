#include "harmonize/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "harmonize/rng.hpp"

namespace harmonize {

namespace {

std::string trim_cr(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    out.push_back(cell);
    return out;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN";
}

bool parse_double(const std::string& cell, double& out) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset::Dataset(std::vector<std::string> subject_ids, Eigen::MatrixXd features,
                 std::vector<std::string> feature_names, std::vector<int> site_codes,
                 std::vector<std::string> site_registry, std::vector<CovariateColumn> covariates)
    : subject_ids_(std::move(subject_ids)),
      features_(std::move(features)),
      feature_names_(std::move(feature_names)),
      site_codes_(std::move(site_codes)),
      site_registry_(std::move(site_registry)),
      covariates_(std::move(covariates)) {
    const size_t n = static_cast<size_t>(features_.rows());
    if (feature_names_.size() != static_cast<size_t>(features_.cols()))
        throw ValidationError("feature name count does not match feature matrix width");
    if (features_.cols() < 1) throw ValidationError("dataset needs at least one feature");
    if (subject_ids_.size() != n || site_codes_.size() != n)
        throw ValidationError("row counts of ids, sites and features differ");
    if (site_registry_.empty()) throw ValidationError("site registry is empty");
    for (int code : site_codes_) {
        if (code < 0 || code >= static_cast<int>(site_registry_.size()))
            throw ValidationError("site code outside registry");
    }
    for (const auto& cov : covariates_) {
        const size_t rows = cov.kind == ColumnKind::numeric ? cov.numeric.size() : cov.codes.size();
        if (rows != n) throw ValidationError("covariate '" + cov.name + "' row count differs");
    }
    for (Eigen::Index i = 0; i < features_.size(); ++i) {
        if (!std::isfinite(features_.data()[i])) throw ValidationError("non-finite feature value");
    }
}

const CovariateColumn* Dataset::find_covariate(const std::string& name) const {
    for (const auto& c : covariates_)
        if (c.name == name) return &c;
    return nullptr;
}

const CovariateColumn& Dataset::covariate(const std::string& name) const {
    const CovariateColumn* c = find_covariate(name);
    if (!c) throw ValidationError("missing covariate column '" + name + "'");
    return *c;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
    const int m = static_cast<int>(rows.size());
    std::vector<std::string> ids(m);
    Eigen::MatrixXd feats(m, features_.cols());
    std::vector<int> sites(m);
    for (int i = 0; i < m; ++i) {
        const int r = rows[i];
        ids[i] = subject_ids_[r];
        feats.row(i) = features_.row(r);
        sites[i] = site_codes_[r];
    }
    std::vector<CovariateColumn> covs;
    covs.reserve(covariates_.size());
    for (const auto& c : covariates_) {
        CovariateColumn out;
        out.name = c.name;
        out.kind = c.kind;
        out.levels = c.levels;
        if (c.kind == ColumnKind::numeric) {
            out.numeric.resize(m);
            for (int i = 0; i < m; ++i) out.numeric[i] = c.numeric[rows[i]];
        } else {
            out.codes.resize(m);
            for (int i = 0; i < m; ++i) out.codes[i] = c.codes[rows[i]];
        }
        covs.push_back(std::move(out));
    }
    return Dataset(std::move(ids), std::move(feats), feature_names_, std::move(sites),
                   site_registry_, std::move(covs));
}

Dataset Dataset::with_features(Eigen::MatrixXd features) const {
    if (features.rows() != features_.rows() || features.cols() != features_.cols())
        throw ValidationError("replacement feature matrix shape differs");
    return Dataset(subject_ids_, std::move(features), feature_names_, site_codes_,
                   site_registry_, covariates_);
}

Dataset load_feature_table(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty file '" + path + "'");
    const std::vector<std::string> header = split_csv_line(trim_cr(line));

    std::unordered_map<std::string, int> col_index;
    for (size_t i = 0; i < header.size(); ++i) {
        if (col_index.count(header[i]))
            throw ValidationError("duplicate column '" + header[i] + "' in header");
        col_index[header[i]] = static_cast<int>(i);
    }
    auto require_col = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw ValidationError("column '" + name + "' not in header");
        return it->second;
    };

    const int id_col = require_col(schema.id_column);
    const int site_col = require_col(schema.site_column);
    std::vector<int> cov_cols;
    for (const auto& c : schema.covariate_columns) cov_cols.push_back(require_col(c));

    std::vector<int> feat_cols;
    if (!schema.feature_columns.empty()) {
        for (const auto& c : schema.feature_columns) feat_cols.push_back(require_col(c));
    } else {
        std::set<int> mapped(cov_cols.begin(), cov_cols.end());
        mapped.insert(id_col);
        mapped.insert(site_col);
        for (size_t i = 0; i < header.size(); ++i)
            if (!mapped.count(static_cast<int>(i))) feat_cols.push_back(static_cast<int>(i));
    }
    if (feat_cols.empty()) throw ValidationError("schema yields an empty feature set");

    std::vector<std::vector<std::string>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
        rows.push_back(std::move(cells));
    }

    // Reject rows with missing mapped values, all at once and row-indexed.
    std::vector<int> all_mapped = {id_col, site_col};
    all_mapped.insert(all_mapped.end(), cov_cols.begin(), cov_cols.end());
    all_mapped.insert(all_mapped.end(), feat_cols.begin(), feat_cols.end());
    std::string missing_report;
    int missing_count = 0;
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c : all_mapped) {
            if (is_missing(rows[r][c])) {
                ++missing_count;
                if (missing_count <= 20)
                    missing_report += "\n  row " + std::to_string(r + 1) + ": column '" + header[c] + "'";
            }
        }
    }
    if (missing_count > 0)
        throw ValidationError("missing values in " + std::to_string(missing_count) +
                              " mapped cell(s):" + missing_report);

    const int n = static_cast<int>(rows.size());
    if (n == 0) throw ValidationError("no data rows in '" + path + "'");

    std::vector<std::string> ids(n);
    std::unordered_set<std::string> seen_ids;
    for (int r = 0; r < n; ++r) {
        ids[r] = rows[r][id_col];
        if (!seen_ids.insert(ids[r]).second)
            throw ValidationError("duplicate subject id '" + ids[r] + "'");
    }

    // Site registry in sorted order, independent of row order.
    std::set<std::string> site_set;
    for (int r = 0; r < n; ++r) site_set.insert(rows[r][site_col]);
    std::vector<std::string> registry(site_set.begin(), site_set.end());
    std::unordered_map<std::string, int> site_code;
    for (size_t i = 0; i < registry.size(); ++i) site_code[registry[i]] = static_cast<int>(i);
    std::vector<int> sites(n);
    for (int r = 0; r < n; ++r) sites[r] = site_code[rows[r][site_col]];

    auto parse_numeric_cell = [&](int r, int c) {
        double v;
        if (!parse_double(rows[r][c], v))
            throw ValidationError("row " + std::to_string(r + 1) + ", column '" + header[c] +
                                  "': unparseable numeric cell '" + rows[r][c] + "'");
        return v;
    };

    Eigen::MatrixXd feats(n, static_cast<int>(feat_cols.size()));
    std::vector<std::string> feat_names;
    for (size_t j = 0; j < feat_cols.size(); ++j) {
        feat_names.push_back(header[feat_cols[j]]);
        for (int r = 0; r < n; ++r) feats(r, static_cast<int>(j)) = parse_numeric_cell(r, feat_cols[j]);
    }

    std::vector<CovariateColumn> covs;
    for (size_t j = 0; j < cov_cols.size(); ++j) {
        const int c = cov_cols[j];
        CovariateColumn col;
        col.name = header[c];
        bool numeric = true;
        for (int r = 0; r < n && numeric; ++r) {
            double v;
            numeric = parse_double(rows[r][c], v);
        }
        if (numeric) {
            col.kind = ColumnKind::numeric;
            col.numeric.resize(n);
            for (int r = 0; r < n; ++r) col.numeric[r] = parse_numeric_cell(r, c);
        } else {
            col.kind = ColumnKind::categorical;
            std::set<std::string> level_set;
            for (int r = 0; r < n; ++r) level_set.insert(rows[r][c]);
            col.levels.assign(level_set.begin(), level_set.end());
            std::unordered_map<std::string, int> code;
            for (size_t i = 0; i < col.levels.size(); ++i) code[col.levels[i]] = static_cast<int>(i);
            col.codes.resize(n);
            for (int r = 0; r < n; ++r) col.codes[r] = code[rows[r][c]];
        }
        covs.push_back(std::move(col));
    }

    return Dataset(std::move(ids), std::move(feats), std::move(feat_names), std::move(sites),
                   std::move(registry), std::move(covs));
}

void write_feature_table(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file '" + path + "'");
    out << "subject_id,site";
    for (const auto& c : d.covariates()) out << ',' << c.name;
    for (const auto& f : d.feature_names()) out << ',' << f;
    out << '\n';
    for (int r = 0; r < d.n(); ++r) {
        out << d.subject_ids()[r] << ',' << d.site_name(r);
        for (const auto& c : d.covariates()) {
            if (c.kind == ColumnKind::numeric)
                out << ',' << format_double(c.numeric[r]);
            else
                out << ',' << c.levels[c.codes[r]];
        }
        for (int j = 0; j < d.feature_count(); ++j) out << ',' << format_double(d.features()(r, j));
        out << '\n';
    }
    if (!out) throw ValidationError("write failed for '" + path + "'");
}

namespace {

// Stratum labels for splitting/fold assignment: site column or categorical
// covariate by name.
std::vector<int> stratum_codes(const Dataset& d, const std::string& column, int& k_out) {
    if (column == "site" || column.empty()) {
        k_out = d.site_count();
        return d.site_codes();
    }
    const CovariateColumn& c = d.covariate(column);
    if (c.kind != ColumnKind::categorical)
        throw ValidationError("stratification column '" + column + "' is not categorical");
    k_out = static_cast<int>(c.levels.size());
    return c.codes;
}

}  // namespace

std::pair<Dataset, Dataset> split_holdout(const Dataset& d, double fraction,
                                          const std::string& stratify_by, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("hold-out fraction must lie strictly between 0 and 1");
    int k = 0;
    const std::vector<int> strata = stratum_codes(d, stratify_by, k);

    std::vector<std::vector<int>> groups(k);
    for (int i = 0; i < d.n(); ++i) groups[strata[i]].push_back(i);

    std::vector<int> first, second;
    for (int s = 0; s < k; ++s) {
        auto& g = groups[s];
        if (g.empty()) continue;
        if (g.size() < 2)
            throw ValidationError("stratum " + std::to_string(s) +
                                  " has fewer than 2 rows; cannot place a row in each half");
        Rng rng(derive_seed(seed, static_cast<uint64_t>(s)));
        rng.shuffle(g);
        int take = static_cast<int>(std::floor(fraction * static_cast<double>(g.size()) + 0.5));
        take = std::clamp(take, 1, static_cast<int>(g.size()) - 1);
        first.insert(first.end(), g.begin(), g.begin() + take);
        second.insert(second.end(), g.begin() + take, g.end());
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {d.subset(first), d.subset(second)};
}

Dataset select_meta_dataset(const Dataset& d, const MetaDatasetSpec& spec) {
    if (!(spec.age_min < spec.age_max)) throw ValidationError("meta-dataset needs age_min < age_max");
    if (spec.included_sites.empty()) throw ValidationError("meta-dataset needs at least one site");
    const CovariateColumn& age = d.covariate("age");
    if (age.kind != ColumnKind::numeric) throw ValidationError("age covariate must be numeric");

    std::set<std::string> wanted(spec.included_sites.begin(), spec.included_sites.end());
    std::vector<int> rows;
    for (int i = 0; i < d.n(); ++i) {
        if (age.numeric[i] < spec.age_min || age.numeric[i] > spec.age_max) continue;
        if (!wanted.count(d.site_name(i))) continue;
        rows.push_back(i);
    }
    if (rows.empty())
        throw ValidationError("meta-dataset '" + spec.name + "' selects no rows");

    Dataset sub = d.subset(rows);

    // Re-register only the sites actually present.
    std::set<std::string> present;
    for (int i = 0; i < sub.n(); ++i) present.insert(sub.site_name(i));
    std::vector<std::string> registry(present.begin(), present.end());
    std::unordered_map<std::string, int> code;
    for (size_t i = 0; i < registry.size(); ++i) code[registry[i]] = static_cast<int>(i);
    std::vector<int> sites(sub.n());
    for (int i = 0; i < sub.n(); ++i) sites[i] = code[sub.site_name(i)];

    return Dataset(sub.subject_ids(), sub.features(), sub.feature_names(), std::move(sites),
                   std::move(registry), sub.covariates());
}

}  // namespace harmonize
