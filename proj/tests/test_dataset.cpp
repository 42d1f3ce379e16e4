#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "harmonize/dataset.hpp"

using namespace harmonize;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
    std::string path = std::string("/tmp/harmonize_test_") + name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path;
}

TableSchema schema_age_sex() {
    TableSchema s;
    s.covariate_columns = {"age", "sex"};
    return s;
}

}  // namespace

TEST_CASE("3-row csv parses into the expected shape") {
    auto path = write_temp("basic.csv",
                           "subject_id,site,age,sex,f1\n"
                           "a,siteA,10,M,1.5\n"
                           "b,siteB,11,F,2.5\n"
                           "c,siteA,12,M,3.5\n");
    Dataset d = load_feature_table(path, schema_age_sex());
    CHECK(d.n() == 3);
    CHECK(d.feature_count() == 1);
    CHECK(d.site_count() == 2);
    CHECK(d.feature_names() == std::vector<std::string>{"f1"});
    CHECK(d.covariate("age").kind == ColumnKind::numeric);
    CHECK(d.covariate("sex").kind == ColumnKind::categorical);
    CHECK(d.covariate("sex").levels == std::vector<std::string>{"F", "M"});
    CHECK(d.features()(2, 0) == 3.5);
}

TEST_CASE("blank cell is rejected with row and column named") {
    auto path = write_temp("missing.csv",
                           "subject_id,site,age,f1\n"
                           "a,siteA,10,1.5\n"
                           "b,siteB,,2.5\n");
    TableSchema s;
    s.covariate_columns = {"age"};
    try {
        load_feature_table(path, s);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 2") != std::string::npos);
        CHECK(what.find("age") != std::string::npos);
    }
}

TEST_CASE("duplicate subject ids are rejected") {
    auto path = write_temp("dup.csv",
                           "subject_id,site,f1\na,siteA,1\na,siteA,2\n");
    CHECK_THROWS_AS(load_feature_table(path, TableSchema{}), ValidationError);
}

TEST_CASE("unparseable numeric cell names the position") {
    auto path = write_temp("badnum.csv",
                           "subject_id,site,f1\na,siteA,1\nb,siteA,oops\n");
    try {
        load_feature_table(path, TableSchema{});
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("unparseable") != std::string::npos);
    }
}

TEST_CASE("empty feature set is rejected") {
    auto path = write_temp("nofeat.csv", "subject_id,site\na,siteA\nb,siteA\n");
    CHECK_THROWS_AS(load_feature_table(path, TableSchema{}), ValidationError);
}

TEST_CASE("missing file is an error") {
    CHECK_THROWS_AS(load_feature_table("/tmp/does_not_exist_12345.csv", TableSchema{}),
                    ValidationError);
}

TEST_CASE("crlf input is accepted") {
    auto path = write_temp("crlf.csv", "subject_id,site,f1\r\na,siteA,1\r\nb,siteB,2\r\n");
    Dataset d = load_feature_table(path, TableSchema{});
    CHECK(d.n() == 2);
}

TEST_CASE("write then load reproduces values exactly and preserves row order") {
    auto path = write_temp("rt_in.csv",
                           "subject_id,site,age,f1,f2\n"
                           "a,siteB,10.123456789012345,0.1,1e-17\n"
                           "b,siteA,11,2.5000000000000004,3.5\n");
    TableSchema s;
    s.covariate_columns = {"age"};
    Dataset d = load_feature_table(path, s);
    auto out = write_temp("rt_out.csv", "");
    write_feature_table(d, out);
    Dataset d2 = load_feature_table(out, s);
    REQUIRE(d2.n() == d.n());
    CHECK(d2.subject_ids() == d.subject_ids());
    for (int r = 0; r < d.n(); ++r) {
        CHECK(d2.site_name(r) == d.site_name(r));
        CHECK(d2.covariate("age").numeric[r] == d.covariate("age").numeric[r]);
        for (int f = 0; f < d.feature_count(); ++f) CHECK(d2.features()(r, f) == d.features()(r, f));
    }
}

namespace {

Dataset synthetic(int n, int sites) {
    std::vector<std::string> ids;
    std::vector<int> codes;
    Eigen::MatrixXd feats(n, 1);
    std::vector<std::string> registry;
    for (int s = 0; s < sites; ++s) registry.push_back("s" + std::to_string(s));
    CovariateColumn age;
    age.name = "age";
    age.kind = ColumnKind::numeric;
    for (int i = 0; i < n; ++i) {
        ids.push_back("id" + std::to_string(i));
        codes.push_back(i % sites);
        feats(i, 0) = i;
        age.numeric.push_back(5.0 + i % 30);
    }
    return Dataset(ids, feats, {"f1"}, codes, registry, {age});
}

}  // namespace

TEST_CASE("balanced split is exact for even strata") {
    Dataset d = synthetic(100, 2);
    auto [a, b] = split_holdout(d, 0.5, "site", 7);
    CHECK(a.n() == 50);
    CHECK(b.n() == 50);
    int a0 = 0;
    for (int i = 0; i < a.n(); ++i) a0 += a.site_codes()[i] == 0;
    CHECK(a0 == 25);
}

TEST_CASE("same seed gives identical partitions") {
    Dataset d = synthetic(100, 2);
    auto [a1, b1] = split_holdout(d, 0.5, "site", 3);
    auto [a2, b2] = split_holdout(d, 0.5, "site", 3);
    CHECK(a1.subject_ids() == a2.subject_ids());
    CHECK(b1.subject_ids() == b2.subject_ids());
}

TEST_CASE("odd strata split 13/12 in some order") {
    Dataset d = synthetic(75, 3);  // 25 per site
    auto [a, b] = split_holdout(d, 0.5, "site", 5);
    for (int s = 0; s < 3; ++s) {
        int na = 0, nb = 0;
        for (int i = 0; i < a.n(); ++i) na += a.site_codes()[i] == s;
        for (int i = 0; i < b.n(); ++i) nb += b.site_codes()[i] == s;
        CHECK(na + nb == 25);
        CHECK(std::min(na, nb) == 12);
        CHECK(std::max(na, nb) == 13);
    }
}

TEST_CASE("split halves are disjoint and exhaustive over 100 seeds") {
    Dataset d = synthetic(37, 3);
    for (uint64_t seed = 0; seed < 100; ++seed) {
        auto [a, b] = split_holdout(d, 0.4, "site", seed);
        std::set<std::string> seen(a.subject_ids().begin(), a.subject_ids().end());
        for (const auto& id : b.subject_ids()) CHECK(seen.insert(id).second);
        CHECK(static_cast<int>(seen.size()) == d.n());
    }
}

TEST_CASE("stratum of one row cannot be split") {
    std::vector<std::string> ids = {"a", "b", "c"};
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(3, 1);
    Dataset d(ids, feats, {"f1"}, {0, 0, 1}, {"sA", "sB"}, {});
    CHECK_THROWS_AS(split_holdout(d, 0.5, "site", 0), ValidationError);
}

TEST_CASE("meta-dataset selection filters by inclusive age range and sites") {
    Dataset d = synthetic(90, 3);  // ages 5..34 cycling
    MetaDatasetSpec spec{"CHILDHOOD", 5.0, 13.0, {"s0", "s1"}};
    Dataset m = select_meta_dataset(d, spec);
    CHECK(m.n() > 0);
    for (int i = 0; i < m.n(); ++i) {
        const double age = m.covariate("age").numeric[i];
        CHECK(age >= 5.0);
        CHECK(age <= 13.0);
        CHECK(m.site_name(i) != "s2");
    }
    CHECK(m.site_count() == 2);  // registry shrinks to present sites
}

TEST_CASE("meta-dataset selecting nothing is an error") {
    Dataset d = synthetic(30, 3);
    MetaDatasetSpec spec{"EMPTY", 90.0, 99.0, {"s0"}};
    CHECK_THROWS_AS(select_meta_dataset(d, spec), ValidationError);
}

TEST_CASE("subset preserves registry and rows") {
    Dataset d = synthetic(10, 2);
    Dataset s = d.subset({1, 3, 5});
    CHECK(s.n() == 3);
    CHECK(s.site_count() == 2);
    CHECK(s.subject_ids()[0] == "id1");
    CHECK(s.features()(2, 0) == 5.0);
}
