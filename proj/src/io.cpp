#include "mecluster/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "mecluster/errors.hpp"

namespace mecluster {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw InputError("not a number in " + where + ": '" + s + "'");
    return v;
}

int parse_int(const std::string& s, const std::string& where) {
    int v = 0;
    const char* b = s.data();
    const char* e = b + s.size();
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw InputError("not an integer in " + where + ": '" + s + "'");
    return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Eigen::VectorXd vector_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw InputError(where + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

} // namespace

ExposurePanel read_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open panel file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty panel file: " + path);
    const std::vector<std::string> header = split_csv_line(line);

    int id_col = -1, day_col = -1, outcome_col = -1;
    std::vector<std::pair<int, int>> y_cols;  // (component number, column)
    std::vector<int> cov_cols;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
        const std::string& name = header[static_cast<std::size_t>(c)];
        if (name == "id") {
            id_col = c;
        } else if (name == "day") {
            day_col = c;
        } else if (name == "outcome") {
            outcome_col = c;
        } else if (name.rfind("y_", 0) == 0) {
            y_cols.emplace_back(parse_int(name.substr(2), "component column name"), c);
        } else {
            cov_cols.push_back(c);
        }
    }
    if (id_col < 0) throw InputError("panel CSV is missing the 'id' column");
    if (day_col < 0) throw InputError("panel CSV is missing the 'day' column");
    if (y_cols.empty()) throw InputError("panel CSV has no exposure columns (y_1, ...)");
    std::sort(y_cols.begin(), y_cols.end());
    for (int m = 0; m < static_cast<int>(y_cols.size()); ++m)
        if (y_cols[static_cast<std::size_t>(m)].first != m + 1)
            throw InputError("panel CSV exposure columns must be y_1..y_M without gaps");

    struct RawRow {
        int day;
        std::vector<double> y;
        std::vector<double> cov;
        std::optional<double> outcome;
    };
    std::vector<std::string> id_order;
    std::map<std::string, std::vector<RawRow>> by_id;

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = split_csv_line(line);
        const std::string where = "row " + std::to_string(line_no);
        if (cells.size() != header.size())
            throw InputError(where + " has " + std::to_string(cells.size()) +
                             " fields, header has " + std::to_string(header.size()));
        RawRow row;
        row.day = parse_int(cells[static_cast<std::size_t>(day_col)], where + " (day)");
        for (const auto& [num, col] : y_cols)
            row.y.push_back(parse_double(cells[static_cast<std::size_t>(col)],
                                         where + " (y_" + std::to_string(num) + ")"));
        for (int col : cov_cols)
            row.cov.push_back(parse_double(cells[static_cast<std::size_t>(col)],
                                           where + " (" + header[static_cast<std::size_t>(col)] + ")"));
        if (outcome_col >= 0) {
            const std::string& cell = cells[static_cast<std::size_t>(outcome_col)];
            if (!cell.empty())
                row.outcome = parse_double(cell, where + " (outcome)");
        }
        const std::string& id = cells[static_cast<std::size_t>(id_col)];
        if (id.empty()) throw InputError(where + " has an empty id");
        auto [it, inserted] = by_id.try_emplace(id);
        if (inserted) id_order.push_back(id);
        it->second.push_back(std::move(row));
    }
    if (id_order.empty()) throw InputError("panel CSV has no data rows");

    ExposurePanel panel;
    panel.n_components = static_cast<int>(y_cols.size());
    for (const std::string& id : id_order) {
        auto& rows = by_id[id];
        std::sort(rows.begin(), rows.end(),
                  [](const RawRow& a, const RawRow& b) { return a.day < b.day; });
        Individual ind;
        ind.id = id;
        ind.reports.resize(static_cast<Eigen::Index>(rows.size()), panel.n_components);
        for (std::size_t t = 0; t < rows.size(); ++t) {
            for (int m = 0; m < panel.n_components; ++m)
                ind.reports(static_cast<Eigen::Index>(t), m) = rows[t].y[static_cast<std::size_t>(m)];
            if (t > 0 && rows[t].day == rows[t - 1].day)
                throw InputError("duplicate day " + std::to_string(rows[t].day) +
                                 " for id " + id);
        }
        ind.covariates = Eigen::Map<const Eigen::VectorXd>(
            rows.front().cov.data(), static_cast<Eigen::Index>(rows.front().cov.size()));
        ind.outcome = rows.front().outcome;
        for (std::size_t t = 1; t < rows.size(); ++t) {
            if (rows[t].cov != rows.front().cov)
                throw InputError("covariates vary across days for id " + id);
            if (rows[t].outcome != rows.front().outcome)
                throw InputError("outcome varies across days for id " + id);
        }
        panel.individuals.push_back(std::move(ind));
    }
    return panel;
}

ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InputError("malformed JSON in " + path + ": " + e.what());
    }

    ScenarioConfig cfg;
    try {
        cfg.id = doc.value("id", std::string("scenario"));
        cfg.datasets = doc.value("datasets", cfg.datasets);
        cfg.individuals = doc.value("individuals", cfg.individuals);
        cfg.m_components = doc.value("components", cfg.m_components);
        cfg.n_clusters = doc.value("clusters", cfg.n_clusters);
        if (doc.contains("cluster_method")) {
            const std::string cm = doc["cluster_method"].get<std::string>();
            if (cm == "kmeans")
                cfg.cluster_method = ClusterMethod::kmeans;
            else if (cm == "gmm")
                cfg.cluster_method = ClusterMethod::gmm;
            else
                throw InputError("unknown cluster_method: " + cm);
        }
        cfg.correlated_u = doc.value("correlated_u", false);
        if (doc.contains("outcome")) {
            const std::string ov = doc["outcome"].get<std::string>();
            if (ov == "A")
                cfg.outcome = OutcomeVariant::A;
            else if (ov == "B")
                cfg.outcome = OutcomeVariant::B;
            else if (ov == "simple")
                cfg.outcome = OutcomeVariant::simple;
            else
                throw InputError("unknown outcome variant: " + ov);
        }
        if (doc.contains("health")) {
            const std::string hk = doc["health"].get<std::string>();
            if (hk == "linear")
                cfg.health = HealthModelKind::linear;
            else if (hk == "logistic")
                cfg.health = HealthModelKind::logistic;
            else
                throw InputError("unknown health model kind: " + hk);
        }
        if (doc.contains("t_shares"))
            cfg.t_shares = doc["t_shares"].get<std::vector<double>>();
        if (doc.contains("gold_days"))
            cfg.gold_days = doc["gold_days"].get<std::vector<int>>();
        if (doc.contains("seed")) {
            cfg.master_seed = doc["seed"].get<std::uint64_t>();
            cfg.seed_set = true;
        }
        if (doc.contains("simex")) {
            const json& sx = doc["simex"];
            if (sx.contains("zeta"))
                cfg.simex.zeta_grid = sx["zeta"].get<std::vector<double>>();
            cfg.simex.replicates = sx.value("replicates", cfg.simex.replicates);
        }
        cfg.imputations = doc.value("imputations", cfg.imputations);
        if (doc.contains("blup_mode")) {
            const std::string bm = doc["blup_mode"].get<std::string>();
            if (bm == "standard")
                cfg.blup_mode = BlupMode::standard;
            else if (bm == "paper")
                cfg.blup_mode = BlupMode::paper;
            else
                throw InputError("unknown blup_mode: " + bm);
        }
        if (doc.contains("cells")) {
            for (const json& c : doc["cells"]) {
                if (!c.is_array() || c.size() != 3)
                    throw InputError("each simple cell must be [sigma2_eh, sigma2_eps, sigma2_u]");
                cfg.simple_cells.push_back(
                    {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw InputError("bad value in " + path + ": " + e.what());
    }
    try {
        if (cfg.outcome != OutcomeVariant::simple)
            cfg.params = default_scenario_params(cfg.m_components);
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string(e.what()) + " in " + path);
    }
    return cfg;
}

std::string error_fit_to_json(const ErrorModelFit& fit) {
    json doc;
    doc["with_outcome"] = fit.with_outcome;
    json comps = json::array();
    for (const auto& c : fit.components) {
        json jc;
        jc["component"] = c.component;
        jc["lambda"] = c.lambda;
        jc["beta0"] = c.beta0;
        jc["beta"] = vector_to_json(c.beta);
        jc["sigma2_u"] = c.sigma2_u;
        jc["sigma2_eps"] = c.sigma2_eps;
        jc["loglik"] = c.loglik;
        jc["lambda_evals"] = c.lambda_evals;
        comps.push_back(std::move(jc));
    }
    doc["components"] = std::move(comps);
    return doc.dump(2) + "\n";
}

ErrorModelFit error_fit_from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed fit JSON: ") + e.what());
    }
    ErrorModelFit fit;
    try {
        fit.with_outcome = doc.at("with_outcome").get<bool>();
        for (const json& jc : doc.at("components")) {
            ErrorModelComponent c;
            c.component = jc.at("component").get<int>();
            c.lambda = jc.at("lambda").get<double>();
            c.beta0 = jc.at("beta0").get<double>();
            c.beta = vector_from_json(jc.at("beta"), "beta");
            c.sigma2_u = jc.at("sigma2_u").get<double>();
            c.sigma2_eps = jc.at("sigma2_eps").get<double>();
            c.loglik = jc.at("loglik").get<double>();
            c.lambda_evals = jc.value("lambda_evals", 0);
            c.with_outcome = fit.with_outcome;
            fit.components.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("bad fit JSON: ") + e.what());
    }
    return fit;
}

ErrorModelFit load_error_fit(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open fit file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return error_fit_from_json_text(ss.str());
}

std::string diagnostics_to_json(const CorrectionDiagnostics& diag) {
    json doc;
    doc["failed"] = diag.failed;
    doc["failure_reason"] = diag.failure_reason;
    doc["boundary_clamped"] = diag.nci.boundary_clamped;
    doc["taylor_floored"] = diag.nci.floored;
    doc["untransformable_redraws"] = diag.untransformable_redraws;
    doc["untransformable_clamped"] = diag.untransformable_clamped;
    doc["corrective_mu_fallbacks"] = diag.corrective_mu_fallbacks;
    doc["simex_failed_replicates"] = diag.simex_failed_replicates;
    doc["mi_dropped_imputations"] = diag.mi_dropped_imputations;
    doc["n_imputations_used"] = diag.n_imputations_used;
    doc["rubin_between_trace"] = diag.rubin_between_trace;
    doc["rubin_within_trace"] = diag.rubin_within_trace;
    json pts = json::array();
    for (const auto& pt : diag.simex_points) {
        json jp;
        jp["zeta"] = pt.zeta;
        jp["replicates_used"] = pt.replicates_used;
        jp["coefs"] = vector_to_json(pt.coefs);
        pts.push_back(std::move(jp));
    }
    doc["simex_points"] = std::move(pts);
    return doc.dump(2) + "\n";
}

namespace {

std::string outcome_label(const ScenarioConfig& config) {
    std::string base = config.outcome == OutcomeVariant::A ? "A" : "B";
    if (config.health == HealthModelKind::logistic) base += "-cat";
    return base;
}

} // namespace

void write_scenario_csv(const std::string& path, const ScenarioConfig& config,
                        const ScenarioResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "scenario_id,method,C,M,cluster_method,corr_u,outcome,MR,aRI,"
           "mean_abs_bias,max_abs_bias,med_rel_bias,n_failed\n";
    const std::string cm =
        config.cluster_method == ClusterMethod::kmeans ? "kmeans" : "gmm";
    for (const auto& m : result.methods) {
        out << result.scenario_id << ',' << m.method << ',' << config.n_clusters << ','
            << config.m_components << ',' << cm << ',' << (config.correlated_u ? 1 : 0)
            << ',' << outcome_label(config) << ',' << format_double(m.mr) << ','
            << format_double(m.ari) << ',' << format_double(m.mean_abs_bias) << ','
            << format_double(m.max_abs_bias) << ',' << format_double(m.med_rel_bias)
            << ',' << m.n_failed << '\n';
    }
}

void write_simple_csv(const std::string& path, const ScenarioConfig& config,
                      const std::vector<SimpleRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "scenario_id,method,I,S,sigma2_eh,sigma2_eps,sigma2_u,rel_bias,n_failed\n";
    for (const auto& r : rows) {
        out << config.id << ',' << r.method << ',' << config.individuals << ','
            << config.datasets << ',' << format_double(r.cell.sigma2_eh) << ','
            << format_double(r.cell.sigma2_eps) << ',' << format_double(r.cell.sigma2_u)
            << ',' << format_double(r.rel_bias) << ',' << r.n_failed << '\n';
    }
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    json doc;
    doc["command"] = manifest.command;
    doc["config"] = manifest.config_path;
    if (manifest.seed)
        doc["seed"] = *manifest.seed;
    else
        doc["seed"] = nullptr;
    doc["workers"] = manifest.workers;
    doc["out"] = manifest.out_dir;
    doc["version"] = manifest.version;
    doc["wall_seconds"] = manifest.wall_seconds;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << doc.dump(2) << "\n";
}

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("MECLUSTER_LOG");
        if (!env) return 0;
        const std::string v(env);
        if (v == "debug" || v == "2") return 2;
        if (v == "info" || v == "1") return 1;
        return 0;
    }();
    return level;
}

namespace {
std::mutex log_mutex;
void log_line(const char* tag, const std::string& msg) {
    std::lock_guard<std::mutex> lock(log_mutex);
    std::cerr << "[mecluster " << tag << "] " << msg << "\n";
}
} // namespace

void log_info(const std::string& msg) {
    if (log_level() >= 1) log_line("info", msg);
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) log_line("debug", msg);
}

} // namespace mecluster
