#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mecluster/correction.hpp"
#include "mecluster/errors.hpp"
#include "mecluster/io.hpp"
#include "mecluster/mixed_model.hpp"
#include "mecluster/simulation.hpp"

namespace {

constexpr const char* kVersion = "mecluster 1.0.0";

// Exit codes: 0 success, 2 input error, 3 method failure, 4 internal error.
constexpr int kExitInput = 2;
constexpr int kExitMethod = 3;
constexpr int kExitInternal = 4;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw mecluster::InputError("cannot create output directory " + dir + ": " +
                                        ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

mecluster::CorrectionMethod parse_method(const std::string& name, bool no_outcome) {
    using mecluster::CorrectionMethod;
    CorrectionMethod m;
    if (name == "naive")
        m = CorrectionMethod::naive;
    else if (name == "rc")
        m = CorrectionMethod::rc;
    else if (name == "simex")
        m = CorrectionMethod::simex;
    else if (name == "mi")
        m = CorrectionMethod::mi;
    else if (name == "mi-null" || name == "mi_null")
        m = CorrectionMethod::mi_null;
    else
        throw mecluster::InputError("unknown method: " + name);
    if (m == CorrectionMethod::mi && no_outcome) m = CorrectionMethod::mi_null;
    return m;
}

struct FitArgs {
    std::string panel_path;
    std::string out_dir = ".";
    bool with_outcome = false;
    std::optional<double> fixed_lambda;
};

int run_fit(const FitArgs& args) {
    const Timer timer;
    const mecluster::ExposurePanel panel = mecluster::read_panel_csv(args.panel_path);
    mecluster::MixedModelOptions opts;
    opts.fixed_lambda = args.fixed_lambda;
    const mecluster::ErrorModelFit fit =
        mecluster::fit_error_model(panel, args.with_outcome, opts);
    ensure_out_dir(args.out_dir);
    {
        std::ofstream out(join_path(args.out_dir, "fit.json"), std::ios::binary);
        if (!out) throw mecluster::InputError("cannot write fit.json");
        out << mecluster::error_fit_to_json(fit);
    }
    mecluster::RunManifest manifest;
    manifest.command = "fit";
    manifest.config_path = args.panel_path;
    manifest.workers = 1;
    manifest.out_dir = args.out_dir;
    manifest.version = kVersion;
    manifest.wall_seconds = timer.seconds();
    mecluster::write_manifest(join_path(args.out_dir, "run_manifest.json"), manifest);
    mecluster::log_info("fit finished in " + mecluster::format_double(timer.seconds()) +
                        " s");
    return 0;
}

struct CorrectArgs {
    std::string panel_path;
    std::string method = "naive";
    std::string out_dir = ".";
    std::string fit_path;
    int clusters = 3;
    std::string cluster_method = "kmeans";
    int degree = 2;
    int imputations = 300;
    bool no_outcome = false;
    std::string blup_mode = "standard";
    std::optional<double> cutoff;
    std::uint64_t seed = 0;
    int workers = 1;
};

void write_contrasts_csv(const std::string& path, const mecluster::CorrectionResult& res) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mecluster::InputError("cannot write " + path);
    out << "method,degree,c,c_prime,estimate\n";
    const std::string name = mecluster::method_name(res.method);
    const int c_total = res.contrasts.n_clusters;
    for (int c = 1; c <= c_total; ++c)
        for (int cp = c + 1; cp <= c_total; ++cp) {
            out << name << ',';
            if (res.simex_degree > 0) out << res.simex_degree;
            out << ',' << c << ',' << cp << ','
                << mecluster::format_double(res.contrasts.contrast(c, cp)) << '\n';
        }
}

int run_correct(const CorrectArgs& args) {
    using namespace mecluster;
    const Timer timer;
    const ExposurePanel panel = read_panel_csv(args.panel_path);
    if (!panel.outcomes_complete())
        throw InputError("correction needs an outcome for every individual");

    CorrectionOptions opts;
    opts.n_clusters = args.clusters;
    if (args.cluster_method == "kmeans")
        opts.cluster_method = ClusterMethod::kmeans;
    else if (args.cluster_method == "gmm")
        opts.cluster_method = ClusterMethod::gmm;
    else
        throw InputError("unknown cluster method: " + args.cluster_method);
    if (args.blup_mode == "standard")
        opts.blup_mode = BlupMode::standard;
    else if (args.blup_mode == "paper")
        opts.blup_mode = BlupMode::paper;
    else
        throw InputError("unknown blup mode: " + args.blup_mode);
    if (args.degree < 2 || args.degree > 4)
        throw InputError("extrapolation degree must be 2, 3 or 4");
    opts.health_kind =
        panel.outcomes_binary() ? HealthModelKind::logistic : HealthModelKind::linear;
    opts.simex.degrees = {args.degree};
    opts.imputations = args.imputations;
    opts.fixed_cutoff = args.cutoff;
    opts.seed = args.seed;
    opts.workers = args.workers;

    const CorrectionMethod method = parse_method(args.method, args.no_outcome);

    PipelineCache cache;
    if (!args.fit_path.empty()) {
        ErrorModelFit fit = load_error_fit(args.fit_path);
        if (fit.n_components() != panel.n_components)
            throw InputError("fit file has " + std::to_string(fit.n_components()) +
                             " components, panel has " +
                             std::to_string(panel.n_components));
        if (fit.with_outcome)
            cache.fit_outcome = std::move(fit);
        else
            cache.fit_plain = std::move(fit);
    }

    ensure_out_dir(args.out_dir);
    const std::string diag_path = join_path(args.out_dir, "diagnostics.json");
    auto finish = [&](const CorrectionDiagnostics& diag) {
        std::ofstream out(diag_path, std::ios::binary);
        if (out) out << diagnostics_to_json(diag);
        RunManifest manifest;
        manifest.command = "correct";
        manifest.config_path = args.panel_path;
        manifest.seed = args.seed;
        manifest.workers = args.workers;
        manifest.out_dir = args.out_dir;
        manifest.version = kVersion;
        manifest.wall_seconds = timer.seconds();
        write_manifest(join_path(args.out_dir, "run_manifest.json"), manifest);
    };

    try {
        CorrectionResult res;
        switch (method) {
            case CorrectionMethod::naive:
                res = correct_naive(panel, opts, &cache);
                break;
            case CorrectionMethod::rc:
                res = correct_rc(panel, opts, &cache);
                break;
            case CorrectionMethod::simex:
                res = std::move(correct_simex(panel, opts, &cache).front());
                break;
            case CorrectionMethod::mi:
                res = correct_mi(panel, opts, /*include_outcome=*/true, &cache);
                break;
            case CorrectionMethod::mi_null:
                res = correct_mi(panel, opts, /*include_outcome=*/false, &cache);
                break;
        }
        write_contrasts_csv(join_path(args.out_dir, "contrasts.csv"), res);
        finish(res.diagnostics);
    } catch (const Error& e) {
        CorrectionDiagnostics diag;
        diag.failed = true;
        diag.failure_reason = e.what();
        finish(diag);
        std::cerr << "method failure: " << e.what() << "\n";
        return kExitMethod;
    }
    mecluster::log_info("correct finished in " +
                        mecluster::format_double(timer.seconds()) + " s");
    return 0;
}

struct SimulateArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    int workers = 1;
};

int run_simulate(const SimulateArgs& args) {
    using namespace mecluster;
    const Timer timer;
    ScenarioConfig config = load_scenario_config(args.config_path);
    if (args.seed) {
        config.master_seed = *args.seed;
        config.seed_set = true;
    }
    if (!config.seed_set)
        throw InputError("simulate needs a seed (--seed or a \"seed\" config entry)");
    config.workers = args.workers;

    ensure_out_dir(args.out_dir);
    log_info("scenario " + config.id + " started");
    std::string csv_path;
    if (config.outcome == OutcomeVariant::simple) {
        const std::vector<SimpleRow> rows = run_simple_setting(config);
        csv_path = join_path(args.out_dir, "simple_results.csv");
        write_simple_csv(csv_path, config, rows);
    } else {
        const ScenarioResult result = run_scenario(config);
        csv_path = join_path(args.out_dir, "scenario_results.csv");
        write_scenario_csv(csv_path, config, result);
    }

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.config_path = args.config_path;
    manifest.seed = config.master_seed;
    manifest.workers = args.workers;
    manifest.out_dir = args.out_dir;
    manifest.version = kVersion;
    manifest.wall_seconds = timer.seconds();
    write_manifest(join_path(args.out_dir, "run_manifest.json"), manifest);
    log_info("scenario " + config.id + " finished in " +
             format_double(timer.seconds()) + " s, results in " + csv_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measurement-error correction for exposure-pattern analyses"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "Fit the repeated-measures error model");
    fit->add_option("--panel", fit_args.panel_path, "Panel CSV")->required();
    fit->add_option("--out", fit_args.out_dir, "Output directory");
    fit->add_flag("--with-outcome", fit_args.with_outcome,
                  "Append the health outcome to the error-model design");
    double fit_lambda = 0.0;
    CLI::Option* fit_lambda_opt = fit->add_option(
        "--fixed-lambda", fit_lambda, "Skip the transform profile and fit at this value");

    CorrectArgs correct_args;
    CLI::App* correct =
        app.add_subcommand("correct", "Estimate cluster-health contrasts from a panel");
    correct->add_option("--panel", correct_args.panel_path, "Panel CSV")->required();
    correct->add_option("--method", correct_args.method,
                        "naive, rc, simex, mi or mi-null")->required();
    correct->add_option("--clusters", correct_args.clusters, "Number of clusters");
    correct->add_option("--cluster-method", correct_args.cluster_method,
                        "kmeans or gmm");
    correct->add_option("--degree", correct_args.degree,
                        "Extrapolation degree for simex (2..4)");
    correct->add_option("--imputations", correct_args.imputations,
                        "Imputation count for mi");
    correct->add_flag("--no-outcome", correct_args.no_outcome,
                      "Drop the outcome from the mi error model");
    correct->add_option("--blup-mode", correct_args.blup_mode, "standard or paper");
    double cutoff = 0.0;
    CLI::Option* cutoff_opt = correct->add_option(
        "--cutoff", cutoff, "Fixed classification cutoff instead of clustering");
    correct->add_option("--seed", correct_args.seed, "Random seed")->required();
    correct->add_option("--workers", correct_args.workers, "Worker threads");
    correct->add_option("--out", correct_args.out_dir, "Output directory");
    correct->add_option("--fit", correct_args.fit_path,
                        "Reuse a serialized error-model fit");

    SimulateArgs simulate_args;
    CLI::App* simulate =
        app.add_subcommand("simulate", "Run a scenario study from a JSON config");
    simulate->add_option("--config", simulate_args.config_path, "Scenario JSON")
        ->required();
    std::uint64_t sim_seed = 0;
    CLI::Option* sim_seed_opt =
        simulate->add_option("--seed", sim_seed, "Master seed (overrides the config)");
    simulate->add_option("--workers", simulate_args.workers, "Worker threads");
    simulate->add_option("--out", simulate_args.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInput;
    }

    try {
        if (fit->parsed()) {
            if (fit_lambda_opt->count() > 0) fit_args.fixed_lambda = fit_lambda;
            return run_fit(fit_args);
        }
        if (correct->parsed()) {
            if (cutoff_opt->count() > 0) correct_args.cutoff = cutoff;
            return run_correct(correct_args);
        }
        if (sim_seed_opt->count() > 0) simulate_args.seed = sim_seed;
        return run_simulate(simulate_args);
    } catch (const mecluster::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const mecluster::Error& e) {
        std::cerr << "method failure: " << e.what() << "\n";
        return kExitMethod;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
