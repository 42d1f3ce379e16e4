#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "harmonize/audit.hpp"
#include "harmonize/combat.hpp"
#include "harmonize/dataset.hpp"
#include "harmonize/fractal.hpp"
#include "harmonize/parallel.hpp"
#include "harmonize/pipeline.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/simulate.hpp"
#include "harmonize/stats.hpp"
#include "harmonize/version.hpp"

using nlohmann::json;
using namespace harmonize;

namespace {

std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input '" + path + "'");
    uint64_t hash = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 1099511628211ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

// Seeded runs must be bit-identical across invocations, so the embedded
// manifest carries configuration and input digests only; the wall-clock
// duration is reported on stderr instead.
struct Manifest {
    std::string command;
    json config = json::object();
    uint64_t seed = 0;
    std::vector<std::string> input_paths;

    json build() const {
        json inputs = json::array();
        for (const auto& p : input_paths)
            inputs.push_back({{"path", p}, {"fnv1a64", fnv1a64_file(p)}});
        return {{"command", command},
                {"config", config},
                {"seed", seed},
                {"toolkit_version", kVersion},
                {"inputs", inputs}};
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write output '" + path + "'");
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) throw ValidationError("write failed for '" + path + "'");
}

void write_report(const std::string& path, json report, const Manifest& manifest) {
    report["manifest"] = manifest.build();
    write_text(path, report.dump(2));
}

// Dataset covariate columns: an explicit list, or the harmonization
// covariates plus whichever of age/sex the header provides.
TableSchema resolve_schema(const std::string& path, const std::string& id_col,
                           const std::string& site_col, const std::string& covariate_cols,
                           const std::vector<std::string>& needed) {
    TableSchema schema;
    schema.id_column = id_col;
    schema.site_column = site_col;
    if (!covariate_cols.empty()) {
        std::stringstream ss(covariate_cols);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) schema.covariate_columns.push_back(item);
        return schema;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input '" + path + "'");
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::vector<std::string> columns;
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) columns.push_back(cell);
    auto has = [&](const std::string& name) {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    };
    std::vector<std::string> wanted = needed;
    for (const char* standard : {"age", "sex"})
        if (has(standard)) wanted.push_back(standard);
    for (const auto& name : wanted) {
        if (!has(name)) throw ValidationError("column '" + name + "' not in header of " + path);
        if (std::find(schema.covariate_columns.begin(), schema.covariate_columns.end(), name) ==
            schema.covariate_columns.end())
            schema.covariate_columns.push_back(name);
    }
    return schema;
}

std::vector<std::string> covariate_names(const CovariateModelSpec& spec) {
    std::vector<std::string> names;
    for (const auto& t : spec.terms) names.push_back(t.covariate);
    return names;
}

json samples_json(const PerformanceSamples& s) {
    json rows = json::array();
    for (int r = 0; r < s.repetitions(); ++r) {
        json row = json::array();
        for (int f = 0; f < s.folds(); ++f) row.push_back(s.values(r, f));
        rows.push_back(std::move(row));
    }
    return {{"metric", s.metric},
            {"values", rows},
            {"per_repetition_means", s.per_repetition_means()},
            {"median", s.median()},
            {"iqr", s.iqr()},
            {"mean", s.mean()}};
}

struct CommonDataFlags {
    std::string id_col = "subject_id";
    std::string site_col = "site";
    std::string covariate_cols;

    void attach(CLI::App* cmd) {
        cmd->add_option("--id-col", id_col, "Subject id column name");
        cmd->add_option("--site-col", site_col, "Site column name");
        cmd->add_option("--covariate-cols", covariate_cols,
                        "Comma-separated covariate columns (default: harmonization covariates "
                        "plus age/sex when present)");
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Multi-site feature harmonization toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // app-level flags (e.g. --threads) may follow the subcommand
    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

    // ---- fit ----------------------------------------------------------
    auto* fit_cmd = app.add_subcommand("fit", "Fit a harmonization model on training data");
    std::string fit_train, fit_out, fit_covariates = "age:spline5";
    bool fit_no_eb = false;
    CommonDataFlags fit_data_flags;
    fit_cmd->add_option("--train", fit_train, "Training CSV")->required();
    fit_cmd->add_option("--covariates", fit_covariates,
                        "Covariate model, e.g. age:spline5,sex (empty for none)");
    fit_cmd->add_flag("--no-eb", fit_no_eb, "Disable empirical Bayes shrinkage");
    fit_cmd->add_option("--out", fit_out, "Output model JSON")->required();
    fit_data_flags.attach(fit_cmd);

    // ---- apply --------------------------------------------------------
    auto* apply_cmd = app.add_subcommand("apply", "Apply a fitted model to a dataset");
    std::string apply_model, apply_data, apply_out;
    CommonDataFlags apply_data_flags;
    apply_cmd->add_option("--model", apply_model, "Model JSON from fit")->required();
    apply_cmd->add_option("--data", apply_data, "CSV to harmonize")->required();
    apply_cmd->add_option("--out", apply_out, "Harmonized CSV")->required();
    apply_data_flags.attach(apply_cmd);

    // ---- simulate -----------------------------------------------------
    auto* sim_cmd = app.add_subcommand("simulate", "Generate multicenter data with known site effects");
    std::string sim_preset, sim_out;
    uint64_t sim_seed = 0;
    double sim_gamma_sd = -1.0, sim_epsilon_sd = -1.0;
    int sim_features = 0;
    bool sim_unit_scale = false;
    sim_cmd->add_option("--preset", sim_preset, "Preset name, e.g. ct-k36-n25")->required();
    sim_cmd->add_option("--seed", sim_seed, "RNG seed")->required();
    sim_cmd->add_option("--gamma-sd", sim_gamma_sd, "Override site location effect sd");
    sim_cmd->add_option("--epsilon-sd", sim_epsilon_sd, "Override residual sd");
    sim_cmd->add_option("--features", sim_features, "Override feature count");
    sim_cmd->add_flag("--unit-scale", sim_unit_scale, "Fix all scale effects to 1");
    sim_cmd->add_option("--out", sim_out, "Output CSV (truth sidecar: <out minus .csv>.truth.json)")
        ->required();

    // ---- cv -----------------------------------------------------------
    auto* cv_cmd = app.add_subcommand("cv", "Cross-validated site or age prediction");
    std::string cv_data, cv_out, cv_target = "site", cv_harmonize = "cv";
    std::string cv_covariates = "age:spline5";
    int cv_folds = 5, cv_reps = 20;
    uint64_t cv_seed = 0;
    bool cv_paper_scale = false;
    CommonDataFlags cv_data_flags;
    cv_cmd->add_option("--data", cv_data, "Input CSV")->required();
    cv_cmd->add_option("--target", cv_target, "Target column: site or a numeric covariate");
    cv_cmd->add_option("--harmonize", cv_harmonize, "none | cv (in-pipeline) | all (before CV, leaky)");
    cv_cmd->add_option("--covariates", cv_covariates, "Harmonization covariate model");
    cv_cmd->add_option("--folds", cv_folds, "Fold count");
    cv_cmd->add_option("--reps", cv_reps, "Repetition count");
    cv_cmd->add_option("--seed", cv_seed, "Base seed")->required();
    cv_cmd->add_flag("--paper-scale", cv_paper_scale, "Use 100 repetitions");
    cv_cmd->add_option("--out", cv_out, "Report JSON")->required();
    cv_data_flags.attach(cv_cmd);

    // ---- efficacy -----------------------------------------------------
    auto* eff_cmd = app.add_subcommand("efficacy", "Two-step harmonization efficacy assessment");
    std::string eff_data, eff_out, eff_mode = "harmonizer_in_cv";
    std::string eff_covariates = "age:spline5";
    int eff_folds = 5, eff_reps = 20, eff_perms = 1000;
    double eff_bin_width = 5.0;
    uint64_t eff_seed = 0;
    bool eff_paper_scale = false;
    CommonDataFlags eff_data_flags;
    eff_cmd->add_option("--data", eff_data, "Input CSV")->required();
    eff_cmd->add_option("--mode", eff_mode, "raw | harmonize_all | harmonizer_in_cv");
    eff_cmd->add_option("--covariates", eff_covariates, "Harmonization covariate model");
    eff_cmd->add_option("--folds", eff_folds, "Fold count");
    eff_cmd->add_option("--reps", eff_reps, "CV repetition count");
    eff_cmd->add_option("--perms", eff_perms, "Permutation count");
    eff_cmd->add_option("--bin-width", eff_bin_width, "Permutation age bin width in years");
    eff_cmd->add_option("--seed", eff_seed, "Base seed")->required();
    eff_cmd->add_flag("--paper-scale", eff_paper_scale, "Use 100 repetitions and 5000 permutations");
    eff_cmd->add_option("--out", eff_out, "Report JSON")->required();
    eff_data_flags.attach(eff_cmd);

    // ---- audit-leakage ------------------------------------------------
    auto* audit_cmd = app.add_subcommand("audit-leakage", "Hold-out leakage experiment on simulated data");
    std::string audit_preset, audit_out, audit_task = "site";
    std::string audit_covariates = "age:spline5";
    int audit_reps = 20;
    uint64_t audit_seed = 0;
    double audit_gamma_sd = -1.0;
    bool audit_paper_scale = false;
    audit_cmd->add_option("--preset", audit_preset, "Simulation preset, e.g. ct-k36-n25")->required();
    audit_cmd->add_option("--task", audit_task, "site | age");
    audit_cmd->add_option("--reps", audit_reps, "Experiment repetitions");
    audit_cmd->add_option("--covariates", audit_covariates, "Harmonization covariate model");
    audit_cmd->add_option("--gamma-sd", audit_gamma_sd, "Override site location effect sd");
    audit_cmd->add_option("--seed", audit_seed, "Base seed")->required();
    audit_cmd->add_flag("--paper-scale", audit_paper_scale, "Use 100 repetitions");
    audit_cmd->add_option("--out", audit_out, "Report JSON")->required();

    // ---- fd -----------------------------------------------------------
    auto* fd_cmd = app.add_subcommand("fd", "Box-counting fractal dimension of a voxel grid");
    std::string fd_grid, fd_out;
    int fd_offsets = 20;
    uint64_t fd_seed = 0;
    fd_cmd->add_option("--grid", fd_grid, "Voxel grid file")->required();
    fd_cmd->add_option("--offsets", fd_offsets, "Random grid offsets per scale");
    fd_cmd->add_option("--seed", fd_seed, "Offset RNG seed")->required();
    fd_cmd->add_option("--out", fd_out, "Report JSON")->required();

    // ---- bc -----------------------------------------------------------
    auto* bc_cmd = app.add_subcommand("bc", "n-distribution Bhattacharyya coefficient of a column by group");
    std::string bc_data, bc_out, bc_value_col = "age", bc_group_col = "site";
    double bc_bin_width = 1.0;
    CommonDataFlags bc_data_flags;
    bc_cmd->add_option("--data", bc_data, "Input CSV")->required();
    bc_cmd->add_option("--value-col", bc_value_col, "Numeric column to compare");
    bc_cmd->add_option("--group-col", bc_group_col, "Grouping column (site or categorical covariate)");
    bc_cmd->add_option("--bin-width", bc_bin_width, "Histogram bin width");
    bc_cmd->add_option("--out", bc_out, "Report JSON")->required();
    bc_data_flags.attach(bc_cmd);

    // ---- ancova -------------------------------------------------------
    auto* ancova_cmd = app.add_subcommand("ancova", "Site-effect partial eta squared per feature");
    std::string ancova_data, ancova_out, ancova_feature = "all";
    std::string ancova_covariates = "age,age^2,sex";
    CommonDataFlags ancova_data_flags;
    ancova_cmd->add_option("--data", ancova_data, "Input CSV")->required();
    ancova_cmd->add_option("--feature", ancova_feature, "Feature name or 'all'");
    ancova_cmd->add_option("--covariates", ancova_covariates,
                           "Comma-separated covariate terms; '^2' squares a numeric column");
    ancova_cmd->add_option("--out", ancova_out, "Report JSON")->required();
    ancova_data_flags.attach(ancova_cmd);

    app.parse(argc, argv);
    const auto started = std::chrono::steady_clock::now();

    if (*fit_cmd) {
        CovariateModelSpec spec = CovariateModelSpec::parse(fit_covariates);
        TableSchema schema = resolve_schema(fit_train, fit_data_flags.id_col, fit_data_flags.site_col,
                                            fit_data_flags.covariate_cols, covariate_names(spec));
        Dataset train = load_feature_table(fit_train, schema);
        CombatOptions options;
        options.eb = !fit_no_eb;
        HarmonizationModel model = combat_fit(train, spec, options);
        export_model(model, fit_out);
    } else if (*apply_cmd) {
        HarmonizationModel model = import_model(apply_model);
        std::vector<std::string> needed;
        for (const auto& t : model.design.terms) needed.push_back(t.covariate);
        TableSchema schema = resolve_schema(apply_data, apply_data_flags.id_col,
                                            apply_data_flags.site_col,
                                            apply_data_flags.covariate_cols, needed);
        Dataset data = load_feature_table(apply_data, schema);
        write_feature_table(combat_apply(model, data), apply_out);
    } else if (*sim_cmd) {
        SimulationConfig config = make_preset(sim_preset, sim_seed);
        if (sim_gamma_sd >= 0.0) config.gamma_sd = sim_gamma_sd;
        if (sim_epsilon_sd >= 0.0) config.epsilon_sd = sim_epsilon_sd;
        if (sim_features > 0) config.feature_count = sim_features;
        config.unit_scale = sim_unit_scale;
        SimulatedData sim = simulate_dataset(config);
        write_feature_table(sim.dataset, sim_out);

        Manifest manifest;
        manifest.command = "simulate";
        manifest.seed = sim_seed;
        manifest.config = {{"preset", sim_preset},
                           {"sites", config.sites},
                           {"subjects_per_site", config.subjects_per_site},
                           {"features", config.feature_count},
                           {"gamma_sd", config.gamma_sd},
                           {"epsilon_sd", config.epsilon_sd},
                           {"unit_scale", config.unit_scale}};
        json truth;
        truth["site_registry"] = sim.dataset.site_registry();
        json gamma = json::array(), delta = json::array();
        for (int i = 0; i < config.sites; ++i) {
            json grow = json::array(), drow = json::array();
            for (int f = 0; f < config.feature_count; ++f) {
                grow.push_back(sim.truth.gamma(i, f));
                drow.push_back(sim.truth.delta(i, f));
            }
            gamma.push_back(std::move(grow));
            delta.push_back(std::move(drow));
        }
        truth["gamma"] = std::move(gamma);
        truth["delta"] = std::move(delta);
        std::string sidecar = sim_out;
        if (sidecar.size() > 4 && sidecar.substr(sidecar.size() - 4) == ".csv")
            sidecar = sidecar.substr(0, sidecar.size() - 4);
        write_report(sidecar + ".truth.json", std::move(truth), manifest);
    } else if (*cv_cmd) {
        if (cv_paper_scale) cv_reps = 100;
        CovariateModelSpec spec = CovariateModelSpec::parse(cv_covariates);
        std::vector<std::string> needed = covariate_names(spec);
        if (cv_target != "site") needed.push_back(cv_target);
        TableSchema schema = resolve_schema(cv_data, cv_data_flags.id_col, cv_data_flags.site_col,
                                            cv_data_flags.covariate_cols, needed);
        Dataset data = load_feature_table(cv_data, schema);

        const TargetSpec target{cv_target};
        const bool classification =
            target.is_site() || data.covariate(cv_target).kind == ColumnKind::categorical;
        const Metric metric =
            classification ? Metric::balanced_accuracy : Metric::mean_absolute_error;

        Dataset working = data;
        Pipeline pipeline;
        if (cv_harmonize == "cv") {
            pipeline.steps.push_back(std::make_unique<HarmonizerTransformer>(spec));
        } else if (cv_harmonize == "all") {
            HarmonizationModel model = combat_fit(data, spec, CombatOptions{});
            working = combat_apply(model, data);
        } else if (cv_harmonize != "none") {
            throw ValidationError("unknown --harmonize mode '" + cv_harmonize + "'");
        }
        pipeline.estimator = std::make_unique<GbtEstimator>(GbtParams{}, classification);

        CvScheme scheme{cv_folds, cv_reps, "site", cv_seed};
        CvResult result = run_cv(pipeline, working, target, scheme, metric, threads);

        Manifest manifest;
        manifest.command = "cv";
        manifest.seed = cv_seed;
        manifest.input_paths = {cv_data};
        manifest.config = {{"target", cv_target}, {"harmonize", cv_harmonize},
                           {"covariates", cv_covariates}, {"folds", cv_folds}, {"reps", cv_reps}};
        json report;
        report["samples"] = samples_json(result.samples);
        if (result.confusion) {
            json confusion;
            confusion["classes"] = result.confusion->class_names;
            json counts = json::array();
            for (int r = 0; r < result.confusion->counts.rows(); ++r) {
                json row = json::array();
                for (int c = 0; c < result.confusion->counts.cols(); ++c)
                    row.push_back(result.confusion->counts(r, c));
                counts.push_back(std::move(row));
            }
            confusion["counts"] = std::move(counts);
            report["confusion"] = std::move(confusion);
        }
        write_report(cv_out, std::move(report), manifest);
    } else if (*eff_cmd) {
        if (eff_paper_scale) {
            eff_reps = 100;
            eff_perms = 5000;
        }
        CovariateModelSpec spec = CovariateModelSpec::parse(eff_covariates);
        TableSchema schema = resolve_schema(eff_data, eff_data_flags.id_col, eff_data_flags.site_col,
                                            eff_data_flags.covariate_cols, covariate_names(spec));
        Dataset data = load_feature_table(eff_data, schema);

        EfficacyOptions options;
        options.mode = efficacy_mode_from_name(eff_mode);
        options.scheme = CvScheme{eff_folds, eff_reps, "site", eff_seed};
        options.n_perm = eff_perms;
        options.age_bin_width = eff_bin_width;
        options.covariates = spec;
        options.threads = resolve_threads(threads);
        EfficacyReport report = assess_efficacy(data, options);

        Manifest manifest;
        manifest.command = "efficacy";
        manifest.seed = eff_seed;
        manifest.input_paths = {eff_data};
        manifest.config = {{"mode", eff_mode},      {"covariates", eff_covariates},
                           {"folds", eff_folds},    {"reps", eff_reps},
                           {"perms", eff_perms},    {"bin_width", eff_bin_width}};
        write_report(eff_out, json::parse(efficacy_report_to_json(report)), manifest);
    } else if (*audit_cmd) {
        if (audit_paper_scale) audit_reps = 100;
        SimulationConfig config = make_preset(audit_preset, derive_seed(audit_seed, 0));
        if (audit_gamma_sd >= 0.0) config.gamma_sd = audit_gamma_sd;

        LeakageOptions options;
        options.site_task = audit_task == "site";
        if (!options.site_task && audit_task != "age")
            throw ValidationError("unknown task '" + audit_task + "'");
        options.repetitions = audit_reps;
        options.covariates = CovariateModelSpec::parse(audit_covariates);
        options.seed = derive_seed(audit_seed, 1);
        options.threads = resolve_threads(threads);
        LeakageReport report = leakage_experiment(config, options);

        Manifest manifest;
        manifest.command = "audit-leakage";
        manifest.seed = audit_seed;
        manifest.config = {{"preset", audit_preset},
                           {"task", audit_task},
                           {"reps", audit_reps},
                           {"covariates", audit_covariates},
                           {"gamma_sd", config.gamma_sd}};
        write_report(audit_out, json::parse(leakage_report_to_json(report)), manifest);
    } else if (*fd_cmd) {
        VoxelGrid grid = load_voxel_grid(fd_grid);
        FdEstimate estimate = fractal_dimension(grid, fd_offsets, fd_seed, resolve_threads(threads));
        Manifest manifest;
        manifest.command = "fd";
        manifest.seed = fd_seed;
        manifest.input_paths = {fd_grid};
        manifest.config = {{"offsets", fd_offsets}};
        write_report(fd_out, json::parse(fd_estimate_to_json(estimate)), manifest);
    } else if (*bc_cmd) {
        std::vector<std::string> needed = {bc_value_col};
        if (bc_group_col != "site") needed.push_back(bc_group_col);
        TableSchema schema = resolve_schema(bc_data, bc_data_flags.id_col, bc_data_flags.site_col,
                                            bc_data_flags.covariate_cols, needed);
        Dataset data = load_feature_table(bc_data, schema);
        const CovariateColumn& values = data.covariate(bc_value_col);
        if (values.kind != ColumnKind::numeric)
            throw ValidationError("value column must be numeric");
        int n_groups = 0;
        std::vector<int> groups_of = target_codes(data, bc_group_col, n_groups);
        std::vector<std::vector<double>> groups(n_groups);
        for (int i = 0; i < data.n(); ++i) groups[groups_of[i]].push_back(values.numeric[i]);
        groups.erase(std::remove_if(groups.begin(), groups.end(),
                                    [](const auto& g) { return g.empty(); }),
                     groups.end());
        std::vector<double> edges = shared_bins(groups, bc_bin_width);
        const double bc = bhattacharyya_n(groups, edges);

        Manifest manifest;
        manifest.command = "bc";
        manifest.input_paths = {bc_data};
        manifest.config = {{"value_col", bc_value_col},
                           {"group_col", bc_group_col},
                           {"bin_width", bc_bin_width}};
        json report;
        report["bc"] = bc;
        report["groups"] = static_cast<int>(groups.size());
        report["bin_edges"] = edges;
        write_report(bc_out, std::move(report), manifest);
    } else if (*ancova_cmd) {
        std::vector<std::string> terms;
        {
            std::stringstream ss(ancova_covariates);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) terms.push_back(item);
        }
        std::vector<std::string> base_columns;
        for (auto name : terms) {
            if (name.size() > 2 && name.substr(name.size() - 2) == "^2")
                name = name.substr(0, name.size() - 2);
            if (std::find(base_columns.begin(), base_columns.end(), name) == base_columns.end())
                base_columns.push_back(name);
        }
        TableSchema schema = resolve_schema(ancova_data, ancova_data_flags.id_col,
                                            ancova_data_flags.site_col,
                                            ancova_data_flags.covariate_cols, base_columns);
        Dataset data = load_feature_table(ancova_data, schema);

        std::vector<std::string> features;
        if (ancova_feature == "all")
            features = data.feature_names();
        else
            features.push_back(ancova_feature);

        json rows = json::array();
        for (const auto& f : features) {
            AncovaResult r = ancova_partial_eta2(data, f, terms);
            rows.push_back({{"feature", f},
                            {"partial_eta2", r.partial_eta2},
                            {"f_statistic", r.f_statistic},
                            {"p_value", r.p_value},
                            {"df_effect", r.df_effect},
                            {"df_residual", r.df_residual}});
        }
        Manifest manifest;
        manifest.command = "ancova";
        manifest.input_paths = {ancova_data};
        manifest.config = {{"covariates", ancova_covariates}, {"feature", ancova_feature}};
        json report;
        report["results"] = std::move(rows);
        write_report(ancova_out, std::move(report), manifest);
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::fprintf(stderr, "harmonize: completed in %.3f s\n", elapsed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        json err = {{"code", "cli"}, {"message", e.what()}};
        std::cerr << "error: " << err.dump() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        json err = {{"code", "validation"}, {"message", e.what()}};
        std::cerr << "error: " << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err = {{"code", "internal"}, {"message", e.what()}};
        std::cerr << "error: " << err.dump() << "\n";
        return 2;
    }
}
