#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "harmonize/errors.hpp"

namespace harmonize {

enum class ColumnKind { numeric, categorical };

/// One covariate column. Categorical values are stored as codes into a
/// sorted level list; one-hot expansion happens at model-fit time only.
struct CovariateColumn {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> numeric;       // used when kind == numeric
    std::vector<int> codes;            // used when kind == categorical
    std::vector<std::string> levels;   // sorted distinct values (categorical)
};

/// Column-role mapping for load_feature_table. An empty feature list means
/// "every column not otherwise mapped is a feature".
struct TableSchema {
    std::string id_column = "subject_id";
    std::string site_column = "site";
    std::vector<std::string> covariate_columns;
    std::vector<std::string> feature_columns;
};

struct MetaDatasetSpec {
    std::string name;
    double age_min = 0.0;
    double age_max = 0.0;
    std::vector<std::string> included_sites;
};

/// Immutable multi-site feature table: n subjects x V features plus site
/// labels and covariates. Safe to share across threads after construction.
class Dataset {
public:
    Dataset(std::vector<std::string> subject_ids, Eigen::MatrixXd features,
            std::vector<std::string> feature_names, std::vector<int> site_codes,
            std::vector<std::string> site_registry, std::vector<CovariateColumn> covariates);

    int n() const { return static_cast<int>(features_.rows()); }
    int feature_count() const { return static_cast<int>(features_.cols()); }
    int site_count() const { return static_cast<int>(site_registry_.size()); }

    const std::vector<std::string>& subject_ids() const { return subject_ids_; }
    const Eigen::MatrixXd& features() const { return features_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<int>& site_codes() const { return site_codes_; }
    const std::vector<std::string>& site_registry() const { return site_registry_; }
    const std::string& site_name(int row) const { return site_registry_[site_codes_[row]]; }
    const std::vector<CovariateColumn>& covariates() const { return covariates_; }

    const CovariateColumn* find_covariate(const std::string& name) const;
    /// Throws ValidationError when the covariate is absent.
    const CovariateColumn& covariate(const std::string& name) const;

    /// Row selection. The site registry is preserved as-is.
    Dataset subset(const std::vector<int>& rows) const;

    /// Same table with the feature matrix replaced (shape must match).
    Dataset with_features(Eigen::MatrixXd features) const;

private:
    std::vector<std::string> subject_ids_;
    Eigen::MatrixXd features_;
    std::vector<std::string> feature_names_;
    std::vector<int> site_codes_;
    std::vector<std::string> site_registry_;
    std::vector<CovariateColumn> covariates_;
};

/// Parses a CSV feature table. Header row required, UTF-8, LF or CRLF.
/// Rows with missing mapped cells are rejected together in one error that
/// lists every offending (row, column) pair.
Dataset load_feature_table(const std::string& path, const TableSchema& schema);

/// Writes `subject_id,site,<covariates...>,<features...>` with LF line ends
/// and 17-significant-digit numbers, so a reload reproduces values exactly.
void write_feature_table(const Dataset& d, const std::string& path);

/// Stratified hold-out split. Each stratum is split as close to `fraction`
/// as integer rounding allows; the two halves partition the rows exactly.
std::pair<Dataset, Dataset> split_holdout(const Dataset& d, double fraction,
                                          const std::string& stratify_by, uint64_t seed);

/// Rows with age in [age_min, age_max] and site in included_sites. The
/// result's site registry contains only sites actually present.
Dataset select_meta_dataset(const Dataset& d, const MetaDatasetSpec& spec);

}  // namespace harmonize
