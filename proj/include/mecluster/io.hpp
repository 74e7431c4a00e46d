#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mecluster/correction.hpp"
#include "mecluster/mixed_model.hpp"
#include "mecluster/panel.hpp"
#include "mecluster/simulation.hpp"

namespace mecluster {

// Shortest decimal text that parses back to the same double; "nan"/"inf"
// spelled as such. Used everywhere numbers are written so output bytes do
// not depend on locale or platform printf.
std::string format_double(double v);

// Panel CSV: comma-separated, UTF-8, '.' decimal, header row. Required
// columns id and day; exposure components are the columns named y_1..y_M
// (numeric suffix order); an optional outcome column; every remaining
// column is a covariate, kept in file order. One row per reported day;
// covariates and outcome must not vary within an id. Throws InputError with
// the offending column or row in the message.
ExposurePanel read_panel_csv(const std::string& path);

// Scenario JSON. Generative parameters always come from the built-in tables
// for the configured component count; the seed may be set here or overridden
// by the caller.
ScenarioConfig load_scenario_config(const std::string& path);

std::string error_fit_to_json(const ErrorModelFit& fit);
ErrorModelFit error_fit_from_json_text(const std::string& text);
ErrorModelFit load_error_fit(const std::string& path);

std::string diagnostics_to_json(const CorrectionDiagnostics& diag);

// One row per (scenario, method): scenario_id, method, C, M, cluster_method,
// corr_u, outcome, MR, aRI, mean_abs_bias, max_abs_bias, med_rel_bias,
// n_failed.
void write_scenario_csv(const std::string& path, const ScenarioConfig& config,
                        const ScenarioResult& result);

// One row per (cell, method) of the single-exposure validation grid.
void write_simple_csv(const std::string& path, const ScenarioConfig& config,
                      const std::vector<SimpleRow>& rows);

struct RunManifest {
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out_dir;
    std::string version;
    double wall_seconds = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

// Log level from MECLUSTER_LOG: 0 silent (default), 1 info, 2 debug.
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

} // namespace mecluster
