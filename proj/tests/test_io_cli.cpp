#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mecluster/correction.hpp"
#include "mecluster/errors.hpp"
#include "mecluster/io.hpp"
#include "mecluster/mixed_model.hpp"
#include "mecluster/simulation.hpp"

using namespace mecluster;
using nlohmann::json;

namespace {

// Scratch directory removed when the test block ends.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("mecluster_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

int run_cli(const std::string& args, const std::string& capture_path = "") {
    std::string cmd = std::string(MECLUSTER_BIN) + " " + args;
    if (capture_path.empty())
        cmd += " > /dev/null 2>&1";
    else
        cmd += " > " + capture_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

// Two well-separated report levels with a covariate and an outcome column.
std::string panel_csv(int per_group, bool binary_outcome) {
    std::ostringstream out;
    out << "id,day,y_1,bmi,outcome\n";
    for (int i = 0; i < 2 * per_group; ++i) {
        const int group = i < per_group ? 0 : 1;
        const double base = group == 0 ? 5.0 : 15.0;
        const double bmi = 22.0 + static_cast<double>(i % 5);
        const double outcome = binary_outcome
                                   ? static_cast<double>(group)
                                   : static_cast<double>(group) +
                                         0.05 * static_cast<double>((i * 13) % 7 - 3);
        for (int t = 0; t < 3; ++t) {
            const double jitter = 0.3 * static_cast<double>((i * 7 + t * 3) % 5 - 2);
            out << "p" << i << ',' << (t + 1) << ',' << (base + jitter) << ',' << bmi
                << ',' << outcome << '\n';
        }
    }
    return out.str();
}

} // namespace

TEST_CASE("format_double emits strings that parse back exactly") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.75) == "-2.75");
    const double values[] = {1.0 / 3.0, 0.1, 1e-9, -123456.789, 2.5e17, 6.25};
    for (double v : values) {
        const double back = std::stod(format_double(v));
        CHECK(back == v);
    }
}

TEST_CASE("panel CSV reader parses ids, days, components and covariates") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    // Days out of order, components out of order, covariates in file order.
    write_file(path,
               "id,day,y_2,age,y_1,smoker,outcome\n"
               "a,2,20.2,31,2.2,0,1.5\n"
               "a,1,20.1,31,2.1,0,1.5\n"
               "a,3,20.3,31,2.3,0,1.5\n"
               "b,1,30.1,45,3.1,1,\n"
               "b,2,30.2,45,3.2,1,\n");
    const ExposurePanel panel = read_panel_csv(path);
    CHECK(panel.size() == 2);
    CHECK(panel.n_components == 2);
    CHECK(panel.n_covariates() == 2);
    const Individual& a = panel.individuals[0];
    CHECK(a.id == "a");
    CHECK(a.days() == 3);
    // Rows are sorted by day and components follow the y_<m> suffix.
    CHECK(a.reports(0, 0) == doctest::Approx(2.1));
    CHECK(a.reports(2, 0) == doctest::Approx(2.3));
    CHECK(a.reports(0, 1) == doctest::Approx(20.1));
    CHECK(a.covariates(0) == doctest::Approx(31.0));
    CHECK(a.covariates(1) == doctest::Approx(0.0));
    REQUIRE(a.outcome.has_value());
    CHECK(*a.outcome == doctest::Approx(1.5));
    const Individual& b = panel.individuals[1];
    CHECK(b.days() == 2);
    CHECK_FALSE(b.outcome.has_value());
    CHECK_FALSE(panel.outcomes_complete());
}

TEST_CASE("panel CSV reader rejects malformed input") {
    TempDir dir;
    const auto expect_error = [&](const std::string& content, const std::string& what) {
        const std::string path = dir.file("bad.csv");
        write_file(path, content);
        CHECK_THROWS_WITH_AS(read_panel_csv(path), doctest::Contains(what.c_str()), InputError);
    };
    expect_error("id,y_1\na,2.0\n", "missing the 'day' column");
    expect_error("day,y_1\n1,2.0\n", "missing the 'id' column");
    expect_error("id,day,bmi\na,1,22\n", "no exposure columns");
    expect_error("id,day,y_1,y_3\na,1,2.0,3.0\n", "must be y_1..y_M without gaps");
    expect_error("id,day,y_1\na,1,2.0\na,1,2.5\n", "duplicate day 1 for id a");
    expect_error("id,day,y_1,bmi\na,1,2.0,22\na,2,2.5,23\n", "covariates vary");
    expect_error("id,day,y_1,outcome\na,1,2.0,1\na,2,2.5,0\n", "outcome varies");
    expect_error("id,day,y_1\na,1\n", "fields");
    expect_error("id,day,y_1\na,1,oops\n", "y_1");
    expect_error("id,day,y_1\n", "no data rows");
    CHECK_THROWS_WITH_AS(read_panel_csv(dir.file("absent.csv")),
                         doctest::Contains("cannot open"), InputError);
}

TEST_CASE("error model fit JSON round trip preserves every field") {
    ErrorModelFit fit;
    fit.with_outcome = true;
    ErrorModelComponent c1;
    c1.component = 0;
    c1.lambda = 0.35;
    c1.beta0 = 1.25;
    c1.beta = Eigen::VectorXd(2);
    c1.beta << -0.5, 1.0 / 3.0;
    c1.sigma2_u = 0.8;
    c1.sigma2_eps = 1.7;
    c1.loglik = -123.456;
    c1.with_outcome = true;
    c1.lambda_evals = 42;
    ErrorModelComponent c2;
    c2.component = 1;
    c2.lambda = 1.0;
    c2.beta0 = -2.0;
    c2.beta = Eigen::VectorXd(0);
    c2.sigma2_u = 0.05;
    c2.sigma2_eps = 0.01;
    c2.loglik = 9.75;
    c2.with_outcome = true;
    c2.lambda_evals = 7;
    fit.components = {c1, c2};

    const std::string text = error_fit_to_json(fit);
    const ErrorModelFit back = error_fit_from_json_text(text);
    REQUIRE(back.n_components() == 2);
    CHECK(back.with_outcome);
    for (int m = 0; m < 2; ++m) {
        const ErrorModelComponent& want = fit.components[static_cast<std::size_t>(m)];
        const ErrorModelComponent& got = back.components[static_cast<std::size_t>(m)];
        CHECK(got.component == want.component);
        CHECK(got.lambda == want.lambda);
        CHECK(got.beta0 == want.beta0);
        REQUIRE(got.beta.size() == want.beta.size());
        for (Eigen::Index k = 0; k < want.beta.size(); ++k)
            CHECK(got.beta(k) == want.beta(k));
        CHECK(got.sigma2_u == want.sigma2_u);
        CHECK(got.sigma2_eps == want.sigma2_eps);
        CHECK(got.loglik == want.loglik);
        CHECK(got.with_outcome);
        CHECK(got.lambda_evals == want.lambda_evals);
    }

    CHECK_THROWS_AS(error_fit_from_json_text("not json"), InputError);
    CHECK_THROWS_AS(error_fit_from_json_text("{\"components\": []}"), InputError);
}

TEST_CASE("scenario config loader applies overrides and validates") {
    TempDir dir;
    const std::string path = dir.file("cfg.json");
    write_file(path, R"({
        "id": "demo",
        "datasets": 3,
        "individuals": 120,
        "components": 5,
        "clusters": 4,
        "cluster_method": "gmm",
        "correlated_u": true,
        "outcome": "B",
        "health": "logistic",
        "t_shares": [0.5, 0.5],
        "gold_days": [7],
        "seed": 99,
        "simex": {"zeta": [0.5, 1.0], "replicates": 20},
        "imputations": 40,
        "blup_mode": "paper"
    })");
    const ScenarioConfig cfg = load_scenario_config(path);
    CHECK(cfg.id == "demo");
    CHECK(cfg.datasets == 3);
    CHECK(cfg.individuals == 120);
    CHECK(cfg.m_components == 5);
    CHECK(cfg.n_clusters == 4);
    CHECK(cfg.cluster_method == ClusterMethod::gmm);
    CHECK(cfg.correlated_u);
    CHECK(cfg.outcome == OutcomeVariant::B);
    CHECK(cfg.health == HealthModelKind::logistic);
    REQUIRE(cfg.t_shares.size() == 2);
    CHECK(cfg.t_shares[1] == doctest::Approx(0.5));
    REQUIRE(cfg.gold_days.size() == 1);
    CHECK(cfg.gold_days[0] == 7);
    CHECK(cfg.seed_set);
    CHECK(cfg.master_seed == 99);
    REQUIRE(cfg.simex.zeta_grid.size() == 2);
    CHECK(cfg.simex.replicates == 20);
    CHECK(cfg.imputations == 40);
    CHECK(cfg.blup_mode == BlupMode::paper);

    const std::string simple_path = dir.file("simple.json");
    write_file(simple_path, R"({
        "id": "sm",
        "outcome": "simple",
        "components": 1,
        "datasets": 2,
        "individuals": 50,
        "cells": [[1.0, 0.2, 1.0], [1.0, 5.0, 1.0]]
    })");
    const ScenarioConfig simple = load_scenario_config(simple_path);
    CHECK(simple.outcome == OutcomeVariant::simple);
    REQUIRE(simple.simple_cells.size() == 2);
    CHECK(simple.simple_cells[1].sigma2_eps == doctest::Approx(5.0));
    CHECK_FALSE(simple.seed_set);

    const auto expect_bad = [&](const std::string& content, const std::string& what) {
        const std::string bad = dir.file("bad.json");
        write_file(bad, content);
        CHECK_THROWS_WITH_AS(load_scenario_config(bad), doctest::Contains(what.c_str()),
                             InputError);
    };
    expect_bad(R"({"outcome": "C"})", "unknown outcome variant");
    expect_bad(R"({"outcome": "simple", "components": 1, "cells": [[1.0, 2.0]]})",
               "each simple cell");
    expect_bad(R"({"components": 3})", "components");
    expect_bad("{ nope", "malformed JSON");
    CHECK_THROWS_WITH_AS(load_scenario_config(dir.file("absent.json")),
                         doctest::Contains("cannot open"), InputError);
}

TEST_CASE("correction diagnostics serialize to JSON") {
    CorrectionDiagnostics diag;
    diag.failed = false;
    diag.nci.boundary_clamped = 2;
    diag.nci.floored = 1;
    diag.untransformable_redraws = 3;
    diag.untransformable_clamped = 4;
    diag.corrective_mu_fallbacks = 5;
    diag.simex_failed_replicates = 6;
    diag.mi_dropped_imputations = 7;
    diag.n_imputations_used = 8;
    diag.rubin_between_trace = 0.25;
    diag.rubin_within_trace = 0.75;
    SimexPoint pt;
    pt.zeta = 0.5;
    pt.coefs = Eigen::VectorXd(2);
    pt.coefs << 1.0, -2.0;
    pt.replicates_used = 7;
    diag.simex_points.push_back(pt);

    const json doc = json::parse(diagnostics_to_json(diag));
    CHECK_FALSE(doc.at("failed").get<bool>());
    CHECK(doc.at("boundary_clamped").get<int>() == 2);
    CHECK(doc.at("taylor_floored").get<int>() == 1);
    CHECK(doc.at("untransformable_redraws").get<int>() == 3);
    CHECK(doc.at("untransformable_clamped").get<int>() == 4);
    CHECK(doc.at("corrective_mu_fallbacks").get<int>() == 5);
    CHECK(doc.at("simex_failed_replicates").get<int>() == 6);
    CHECK(doc.at("mi_dropped_imputations").get<int>() == 7);
    CHECK(doc.at("n_imputations_used").get<int>() == 8);
    CHECK(doc.at("rubin_between_trace").get<double>() == doctest::Approx(0.25));
    CHECK(doc.at("rubin_within_trace").get<double>() == doctest::Approx(0.75));
    REQUIRE(doc.at("simex_points").size() == 1);
    const json& jp = doc.at("simex_points")[0];
    CHECK(jp.at("zeta").get<double>() == doctest::Approx(0.5));
    CHECK(jp.at("replicates_used").get<int>() == 7);
    REQUIRE(jp.at("coefs").size() == 2);
    CHECK(jp.at("coefs")[1].get<double>() == doctest::Approx(-2.0));
}

TEST_CASE("scenario and simple CSV writers emit one row per summary") {
    TempDir dir;
    ScenarioConfig cfg;
    cfg.id = "demo";
    cfg.n_clusters = 3;
    cfg.m_components = 5;
    cfg.cluster_method = ClusterMethod::gmm;
    cfg.correlated_u = true;
    cfg.outcome = OutcomeVariant::A;
    cfg.health = HealthModelKind::logistic;

    ScenarioResult result;
    result.scenario_id = "demo";
    MethodSummary m1;
    m1.method = "naive";
    m1.mr = 12.5;
    m1.ari = 0.8;
    m1.mean_abs_bias = 0.25;
    m1.max_abs_bias = 0.5;
    m1.med_rel_bias = 1.16;
    m1.n_failed = 0;
    MethodSummary m2 = m1;
    m2.method = "mi";
    m2.n_failed = 2;
    result.methods = {m1, m2};

    const std::string scen_path = dir.file("scenario.csv");
    write_scenario_csv(scen_path, cfg, result);
    const auto scen_lines = lines_of(read_file(scen_path));
    REQUIRE(scen_lines.size() == 3);
    CHECK(scen_lines[0] ==
          "scenario_id,method,C,M,cluster_method,corr_u,outcome,MR,aRI,"
          "mean_abs_bias,max_abs_bias,med_rel_bias,n_failed");
    CHECK(scen_lines[1] == "demo,naive,3,5,gmm,1,A-cat,12.5,0.8,0.25,0.5,1.16,0");
    CHECK(scen_lines[2] == "demo,mi,3,5,gmm,1,A-cat,12.5,0.8,0.25,0.5,1.16,2");

    ScenarioConfig simple_cfg;
    simple_cfg.id = "sm";
    simple_cfg.outcome = OutcomeVariant::simple;
    simple_cfg.m_components = 1;
    simple_cfg.individuals = 200;
    simple_cfg.datasets = 1000;
    SimpleRow row;
    row.cell = {1.0, 0.2, 1.0};
    row.method = "rc";
    row.rel_bias = 0.18;
    row.n_failed = 1;
    const std::string simple_path = dir.file("simple.csv");
    write_simple_csv(simple_path, simple_cfg, {row});
    const auto simple_lines = lines_of(read_file(simple_path));
    REQUIRE(simple_lines.size() == 2);
    CHECK(simple_lines[0] ==
          "scenario_id,method,I,S,sigma2_eh,sigma2_eps,sigma2_u,rel_bias,n_failed");
    CHECK(simple_lines[1] == "sm,rc,200,1000,1,0.2,1,0.18,1");
}

TEST_CASE("run manifest records the invocation") {
    TempDir dir;
    RunManifest manifest;
    manifest.command = "correct";
    manifest.config_path = "panel.csv";
    manifest.seed = 7;
    manifest.workers = 4;
    manifest.out_dir = "out";
    manifest.version = "mecluster 1.0.0";
    manifest.wall_seconds = 1.5;
    const std::string path = dir.file("manifest.json");
    write_manifest(path, manifest);
    json doc = json::parse(read_file(path));
    CHECK(doc.at("command") == "correct");
    CHECK(doc.at("config") == "panel.csv");
    CHECK(doc.at("seed").get<std::uint64_t>() == 7);
    CHECK(doc.at("workers").get<int>() == 4);
    CHECK(doc.at("version") == "mecluster 1.0.0");
    CHECK(doc.at("wall_seconds").get<double>() == doctest::Approx(1.5));

    manifest.seed.reset();
    write_manifest(path, manifest);
    doc = json::parse(read_file(path));
    CHECK(doc.at("seed").is_null());
}

TEST_CASE("command line reports version and usage") {
    TempDir dir;
    const std::string cap = dir.file("out.txt");
    CHECK(run_cli("--version", cap) == 0);
    CHECK(read_file(cap).find("mecluster 1.0.0") != std::string::npos);
    CHECK(run_cli("--help", cap) == 0);
    const std::string help = read_file(cap);
    CHECK(help.find("fit") != std::string::npos);
    CHECK(help.find("correct") != std::string::npos);
    CHECK(help.find("simulate") != std::string::npos);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
}

TEST_CASE("fit command writes model and manifest files") {
    TempDir dir;
    const std::string panel = dir.file("panel.csv");
    write_file(panel, panel_csv(20, /*binary_outcome=*/false));

    const std::string out1 = dir.file("plain");
    REQUIRE(run_cli("fit --panel " + panel + " --out " + out1) == 0);
    json fit = json::parse(read_file(out1 + "/fit.json"));
    CHECK_FALSE(fit.at("with_outcome").get<bool>());
    REQUIRE(fit.at("components").size() == 1);
    const json& comp = fit.at("components")[0];
    const double lambda = comp.at("lambda").get<double>();
    CHECK(lambda >= 0.05);
    CHECK(lambda <= 2.0);
    CHECK(comp.at("sigma2_eps").get<double>() > 0.0);
    const json manifest = json::parse(read_file(out1 + "/run_manifest.json"));
    CHECK(manifest.at("command") == "fit");
    CHECK(manifest.at("version") == "mecluster 1.0.0");

    const std::string out2 = dir.file("outcome");
    REQUIRE(run_cli("fit --panel " + panel + " --with-outcome --fixed-lambda 1 --out " +
                    out2) == 0);
    fit = json::parse(read_file(out2 + "/fit.json"));
    CHECK(fit.at("with_outcome").get<bool>());
    const json& comp2 = fit.at("components")[0];
    CHECK(comp2.at("lambda").get<double>() == 1.0);
    CHECK(comp2.at("beta").size() >= 1);
}

TEST_CASE("correct command runs every method and is reproducible") {
    TempDir dir;
    const std::string panel = dir.file("panel.csv");
    write_file(panel, panel_csv(20, /*binary_outcome=*/false));
    const std::string base = "correct --panel " + panel + " --clusters 2 --seed 11";

    const std::string d_naive = dir.file("naive");
    REQUIRE(run_cli(base + " --method naive --out " + d_naive) == 0);
    auto rows = lines_of(read_file(d_naive + "/contrasts.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "method,degree,c,c_prime,estimate");
    CHECK(rows[1].rfind("naive,,1,2,", 0) == 0);
    json diag = json::parse(read_file(d_naive + "/diagnostics.json"));
    CHECK_FALSE(diag.at("failed").get<bool>());
    const json manifest = json::parse(read_file(d_naive + "/run_manifest.json"));
    CHECK(manifest.at("command") == "correct");
    CHECK(manifest.at("seed").get<std::uint64_t>() == 11);

    const std::string d_naive2 = dir.file("naive2");
    REQUIRE(run_cli(base + " --method naive --out " + d_naive2) == 0);
    CHECK(read_file(d_naive2 + "/contrasts.csv") ==
          read_file(d_naive + "/contrasts.csv"));

    const std::string d_rc = dir.file("rc");
    REQUIRE(run_cli(base + " --method rc --out " + d_rc) == 0);
    rows = lines_of(read_file(d_rc + "/contrasts.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].rfind("rc,,1,2,", 0) == 0);

    // A pre-fitted error model must reproduce the from-scratch run exactly.
    const std::string d_fit = dir.file("fitdir");
    REQUIRE(run_cli("fit --panel " + panel + " --out " + d_fit) == 0);
    const std::string d_rc2 = dir.file("rc2");
    REQUIRE(run_cli(base + " --method rc --fit " + d_fit + "/fit.json --out " + d_rc2) ==
            0);
    CHECK(read_file(d_rc2 + "/contrasts.csv") == read_file(d_rc + "/contrasts.csv"));

    const std::string d_simex = dir.file("simex");
    REQUIRE(run_cli(base + " --method simex --degree 3 --out " + d_simex) == 0);
    rows = lines_of(read_file(d_simex + "/contrasts.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].rfind("simex,3,1,2,", 0) == 0);
    diag = json::parse(read_file(d_simex + "/diagnostics.json"));
    REQUIRE(diag.at("simex_points").size() == 9);
    CHECK(diag.at("simex_points")[0].at("zeta").get<double>() == 0.0);

    const std::string d_mi = dir.file("mi");
    REQUIRE(run_cli(base + " --method mi --imputations 12 --workers 2 --out " + d_mi) ==
            0);
    rows = lines_of(read_file(d_mi + "/contrasts.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].rfind("mi,,1,2,", 0) == 0);
    diag = json::parse(read_file(d_mi + "/diagnostics.json"));
    CHECK(diag.at("n_imputations_used").get<int>() == 12);

    // Worker count must not change the result bytes.
    const std::string d_mi1 = dir.file("mi1");
    REQUIRE(run_cli(base + " --method mi --imputations 12 --workers 1 --out " + d_mi1) ==
            0);
    CHECK(read_file(d_mi1 + "/contrasts.csv") == read_file(d_mi + "/contrasts.csv"));

    // Dropping the outcome from the imputation model has a dedicated method name.
    const std::string d_null1 = dir.file("null1");
    const std::string d_null2 = dir.file("null2");
    REQUIRE(run_cli(base + " --method mi --no-outcome --imputations 12 --out " +
                    d_null1) == 0);
    REQUIRE(run_cli(base + " --method mi-null --imputations 12 --out " + d_null2) == 0);
    rows = lines_of(read_file(d_null1 + "/contrasts.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].rfind("mi_null,,1,2,", 0) == 0);
    CHECK(read_file(d_null1 + "/contrasts.csv") == read_file(d_null2 + "/contrasts.csv"));
}

TEST_CASE("correct command validates input and surfaces failures") {
    TempDir dir;
    const std::string panel = dir.file("panel.csv");
    write_file(panel, panel_csv(15, /*binary_outcome=*/false));

    CHECK(run_cli("correct --panel " + panel + " --method naive") == 2);
    CHECK(run_cli("correct --panel " + dir.file("absent.csv") +
                  " --method naive --seed 1") == 2);
    CHECK(run_cli("correct --panel " + panel + " --method naive --degree 5 --seed 1") ==
          2);
    CHECK(run_cli("correct --panel " + panel + " --method nonsense --seed 1") == 2);

    const std::string no_outcome = dir.file("no_outcome.csv");
    write_file(no_outcome,
               "id,day,y_1\n"
               "a,1,2.0\na,2,2.5\n"
               "b,1,7.0\nb,2,7.5\n");
    CHECK(run_cli("correct --panel " + no_outcome + " --method naive --seed 1") == 2);

    // A binary outcome equal to the cluster indicator separates the logistic
    // model; the run must fail cleanly and still leave diagnostics behind.
    const std::string sep = dir.file("separated.csv");
    write_file(sep, panel_csv(15, /*binary_outcome=*/true));
    const std::string d_fail = dir.file("fail");
    CHECK(run_cli("correct --panel " + sep +
                  " --method naive --clusters 2 --seed 1 --out " + d_fail) == 3);
    const json diag = json::parse(read_file(d_fail + "/diagnostics.json"));
    CHECK(diag.at("failed").get<bool>());
    CHECK_FALSE(diag.at("failure_reason").get<std::string>().empty());
    CHECK_FALSE(std::filesystem::exists(d_fail + "/contrasts.csv"));
}

TEST_CASE("simulate command runs a simple study from config") {
    TempDir dir;
    const std::string cfg = dir.file("cfg.json");
    write_file(cfg, R"({
        "id": "smoke",
        "outcome": "simple",
        "components": 1,
        "datasets": 2,
        "individuals": 60,
        "cells": [[1.0, 1.0, 1.0]],
        "seed": 5,
        "simex": {"zeta": [0.5, 1.0], "replicates": 10},
        "imputations": 6
    })");

    const std::string d1 = dir.file("run1");
    REQUIRE(run_cli("simulate --config " + cfg + " --out " + d1) == 0);
    const auto rows = lines_of(read_file(d1 + "/simple_results.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] ==
          "scenario_id,method,I,S,sigma2_eh,sigma2_eps,sigma2_u,rel_bias,n_failed");
    CHECK(rows[1].rfind("smoke,naive,60,2,1,1,1,", 0) == 0);
    CHECK(rows[2].rfind("smoke,rc,", 0) == 0);
    CHECK(rows[3].rfind("smoke,simex,", 0) == 0);
    CHECK(rows[4].rfind("smoke,mi,", 0) == 0);
    const json manifest = json::parse(read_file(d1 + "/run_manifest.json"));
    CHECK(manifest.at("command") == "simulate");
    CHECK(manifest.at("seed").get<std::uint64_t>() == 5);

    const std::string d2 = dir.file("run2");
    REQUIRE(run_cli("simulate --config " + cfg + " --out " + d2) == 0);
    CHECK(read_file(d2 + "/simple_results.csv") == read_file(d1 + "/simple_results.csv"));

    // The seed may come from the flag instead of the config.
    const std::string cfg_unseeded = dir.file("cfg_unseeded.json");
    write_file(cfg_unseeded, R"({
        "id": "smoke",
        "outcome": "simple",
        "components": 1,
        "datasets": 2,
        "individuals": 60,
        "cells": [[1.0, 1.0, 1.0]],
        "simex": {"zeta": [0.5, 1.0], "replicates": 10},
        "imputations": 6
    })");
    CHECK(run_cli("simulate --config " + cfg_unseeded) == 2);
    const std::string d3 = dir.file("run3");
    REQUIRE(run_cli("simulate --config " + cfg_unseeded + " --seed 5 --out " + d3) == 0);
    CHECK(read_file(d3 + "/simple_results.csv") == read_file(d1 + "/simple_results.csv"));

    CHECK(run_cli("simulate --config " + dir.file("absent.json")) == 2);
}
