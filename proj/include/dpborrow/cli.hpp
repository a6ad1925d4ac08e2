#pragma once

// Command bodies behind the dpborrow executable. Each returns the process exit
// code: 0 success, 2 input or configuration error, 3 sampler abort.

#include "dpborrow/methods.hpp"
#include "dpborrow/simulation.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef DPBORROW_VERSION
#define DPBORROW_VERSION "0.0.0"
#endif

namespace dpborrow {

namespace fs = std::filesystem;

inline constexpr int exit_ok = 0;
inline constexpr int exit_input = 2;
inline constexpr int exit_sampler = 3;

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + p.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    out << text;
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(what + ": malformed JSON: " + e.what());
    }
}

/// Summary JSON when the file starts with '{', participant CSV otherwise. For
/// CSV without an explicit column map every column other than study, arm and
/// y is a covariate.
inline Dataset load_dataset(const fs::path& path, const std::optional<fs::path>& columns = std::nullopt) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_summary_dataset(text);
    IpdColumnMap map;
    if (columns) map = parse_column_map(parse_json_text(read_file(*columns), columns->string()));
    if (map.covariates.empty()) {
        const auto eol = text.find('\n');
        for (auto& name : detail::split_csv_line(std::string_view(text).substr(0, eol)))
            if (name != map.study && name != map.arm && name != map.outcome) map.covariates.push_back(name);
    }
    return parse_ipd_dataset(text, map);
}

// ---------------------------------------------------------------------------
// validate

inline int cmd_validate(const fs::path& data, const std::optional<fs::path>& columns, std::ostream& out,
                        std::ostream& err) {
    Dataset ds;
    try {
        ds = load_dataset(data, columns);
    } catch (const std::exception& e) {
        err << "invalid: " << e.what() << '\n';
        return exit_input;
    }
    const std::size_t k = ds.num_historical();
    out << k << " historical, 1 current control, " << (ds.current_treatment() ? 1 : 0) << " current treatment\n";
    out << std::fixed;
    if (ds.outcome_kind == OutcomeKind::BinomialSummary) {
        for (const auto& s : ds.studies)
            out << "  " << s.id << ' ' << detail::role_name(s.role.kind) << " n=" << s.summary().n
                << " responses=" << s.summary().responses << " rate=" << std::setprecision(3)
                << static_cast<double>(s.summary().responses) / static_cast<double>(s.summary().n) << '\n';
        return exit_ok;
    }
    for (const auto& s : ds.studies) out << "  " << s.id << ' ' << detail::role_name(s.role.kind) << " rows=" << s.records().size() << '\n';
    for (std::size_t c = 0; c < ds.covariate_names.size(); ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& s : ds.studies)
            for (const auto& r : s.records()) {
                lo = std::min(lo, r.covariates[c + 1]);
                hi = std::max(hi, r.covariates[c + 1]);
            }
        out << "  covariate " << ds.covariate_names[c] << " range [" << std::setprecision(3) << lo << ", " << hi << "]\n";
        if (lo == hi) err << "warning: covariate '" << ds.covariate_names[c] << "' is constant (collinearity risk)\n";
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    fs::path data;
    std::optional<fs::path> config;
    std::optional<fs::path> columns;
    std::string methods = "cd,pd,dpm,ddpm";
    std::uint64_t seed = 1;
    fs::path out = "out";
    nlohmann::json overrides = nlohmann::json::object(); // CLI flags, applied over the config file
};

inline AnalysisConfig load_analysis_config(const std::optional<fs::path>& path, const nlohmann::json& overrides) {
    nlohmann::json j = nlohmann::json::object();
    if (path) j = parse_json_text(read_file(*path), path->string());
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : overrides.items()) j[key] = value;
    return analysis_config_from_json(j);
}

struct SummaryRow {
    std::string method;
    EffectSummary summary;
    bool decision = false;
    std::optional<double> ehss;

    bool operator==(const SummaryRow& o) const {
        return method == o.method && summary.mean == o.summary.mean && summary.sd == o.summary.sd &&
               summary.ci_lo == o.summary.ci_lo && summary.ci_hi == o.summary.ci_hi && summary.prob == o.summary.prob &&
               decision == o.decision && ehss == o.ehss;
    }
};

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    using detail::format_double;
    std::ostringstream out;
    out << "method,mean,sd,ci_lo,ci_hi,prob,decision,ehss\n";
    for (const auto& r : rows)
        out << r.method << ',' << format_double(r.summary.mean) << ',' << format_double(r.summary.sd) << ','
            << format_double(r.summary.ci_lo) << ',' << format_double(r.summary.ci_hi) << ','
            << format_double(r.summary.prob) << ',' << (r.decision ? 1 : 0) << ','
            << (r.ehss ? format_double(*r.ehss) : std::string()) << '\n';
    return out.str();
}

inline std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
    using detail::parse_double;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "method,mean,sd,ci_lo,ci_hi,prob,decision,ehss") throw SchemaError("summary CSV header missing");
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 8) throw SchemaError("summary CSV row has " + std::to_string(f.size()) + " fields");
        SummaryRow r;
        r.method = f[0];
        r.summary = {parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5])};
        r.decision = f[6] == "1";
        if (!f[7].empty()) r.ehss = parse_double(f[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json manifest_json(const std::string& command, const nlohmann::json& config, const std::string& digest,
                                    std::uint64_t seed, double wall_seconds, const nlohmann::json& extra) {
    nlohmann::json m{{"command", command},
                     {"config", config},
                     {"config_digest", digest},
                     {"seed", seed},
                     {"software_version", DPBORROW_VERSION},
                     {"wall_clock_seconds", wall_seconds}};
    for (const auto& [key, value] : extra.items()) m[key] = value;
    return m;
}

/// Streams: method m uses child(1 + m) of RngStream(seed, 0).
inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset ds;
    AnalysisConfig cfg;
    std::vector<Method> methods;
    try {
        ds = load_dataset(args.data, args.columns);
        cfg = load_analysis_config(args.config, args.overrides);
        methods = parse_method_list(args.methods);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }

    std::vector<SummaryRow> rows;
    std::ostringstream sbi_out;
    sbi_out << "method,study,sbi\n";
    nlohmann::json per_method = nlohmann::json::array();
    const RngStream root(args.seed, 0);
    for (Method m : methods) {
        RngStream rng = root.child(1u + static_cast<unsigned>(m));
        MethodResult res;
        try {
            res = run_method(m, ds, cfg, rng);
        } catch (const SamplerAbort& e) {
            err << "sampler abort in " << method_name(m) << ": " << e.what() << '\n';
            return exit_sampler;
        } catch (const std::exception& e) {
            err << "error in " << method_name(m) << ": " << e.what() << '\n';
            return exit_input;
        }
        rows.push_back({method_name(m), res.summary, res.decision, res.ehss});
        for (const auto& s : res.sbi) sbi_out << method_name(m) << ',' << s.study << ',' << detail::format_double(s.sbi) << '\n';
        per_method.push_back({{"method", method_name(m)},
                              {"iters", res.chain.meta.iters},
                              {"burn_in", res.chain.meta.burn_in},
                              {"thin", res.chain.meta.thin},
                              {"retained", res.chain.size()},
                              {"stream_key", 1 + static_cast<int>(m)}});
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        fs::create_directories(args.out);
        write_file(args.out / "summary.csv", summary_csv(rows));
        write_file(args.out / "sbi.csv", sbi_out.str());
        write_file(args.out / "manifest.json",
                   manifest_json("analyze", to_json(cfg), config_digest(cfg), args.seed, wall,
                                 {{"dataset", args.data.string()}, {"dataset_digest", fnv1a_hex(read_file(args.data))},
                                  {"methods", per_method}})
                           .dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }

    const bool pct = ds.outcome_kind == OutcomeKind::BinomialSummary;
    const double scale = pct ? 100.0 : 1.0;
    out << std::fixed << std::setprecision(pct ? 1 : 2);
    out << std::left << std::setw(6) << "method" << std::right << std::setw(8) << "mean" << std::setw(8) << "sd"
        << std::setw(18) << "95% CI" << std::setw(8) << "prob" << std::setw(6) << "dec" << std::setw(9) << "ehss" << '\n';
    for (const auto& r : rows) {
        std::ostringstream ci;
        ci << std::fixed << std::setprecision(pct ? 1 : 2) << '(' << scale * r.summary.ci_lo << ", " << scale * r.summary.ci_hi << ')';
        out << std::left << std::setw(6) << r.method << std::right << std::setw(8) << scale * r.summary.mean << std::setw(8)
            << scale * r.summary.sd << std::setw(18) << ci.str() << std::setw(8) << std::setprecision(3) << r.summary.prob
            << std::setprecision(pct ? 1 : 2) << std::setw(6) << (r.decision ? "yes" : "no") << std::setw(9);
        if (r.ehss) out << *r.ehss;
        else out << "";
        out << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    fs::path plan;
    std::uint64_t seed = 1;
    fs::path out = "out";
    std::optional<int> threads;
    bool full_scale = false; // 10000 binomial / 2000 IPD replicates per cell
};

inline SimPlan parse_plan(const nlohmann::json& j) {
    using detail::json_get;
    if (!j.is_object()) throw ConfigError("plan must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "cells" && key != "methods" && key != "analysis" && key != "threads")
            throw ConfigError("unknown plan key '" + key + "'");
    SimPlan plan;
    plan.threads = 0; // available parallelism unless set
    if (j.contains("methods")) {
        plan.methods.clear();
        for (const auto& m : j.at("methods")) plan.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("analysis")) plan.analysis = analysis_config_from_json(j.at("analysis"));
    if (j.contains("threads")) plan.threads = json_get<int>(j, "threads");
    if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty()) throw ConfigError("plan needs a non-empty 'cells' array");
    for (const auto& c : j.at("cells")) {
        SimCell cell;
        const auto outcome = json_get<std::string>(c, "outcome");
        if (outcome == "binomial") cell.outcome = OutcomeKind::BinomialSummary;
        else if (outcome == "ipd") cell.outcome = OutcomeKind::Ipd;
        else throw ConfigError("cell outcome must be 'binomial' or 'ipd'");
        cell.scenario = json_get<int>(c, "scenario");
        cell.hypothesis = c.contains("hypothesis") ? parse_hypothesis(json_get<std::string>(c, "hypothesis")) : Hypothesis::Null;
        cell.replicates = c.contains("replicates") ? json_get<int>(c, "replicates")
                                                   : (cell.outcome == OutcomeKind::BinomialSummary ? 1000 : 500);
        if (cell.outcome == OutcomeKind::BinomialSummary) BinomialScenario{cell.scenario}.validate();
        else IpdScenario{cell.scenario}.validate();
        if (cell.replicates < 1) throw ConfigError("replicates must be positive");
        plan.cells.push_back(cell);
    }
    return plan;
}

inline nlohmann::json plan_json(const SimPlan& plan) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : plan.cells)
        cells.push_back({{"outcome", c.outcome == OutcomeKind::BinomialSummary ? "binomial" : "ipd"},
                         {"scenario", c.scenario},
                         {"hypothesis", hypothesis_name(c.hypothesis)},
                         {"replicates", c.replicates}});
    nlohmann::json methods = nlohmann::json::array();
    for (Method m : plan.methods) methods.push_back(method_name(m));
    return {{"cells", cells}, {"methods", methods}, {"analysis", to_json(plan.analysis)}};
}

inline std::string failures_csv(const MetricsTable& t) {
    std::ostringstream out;
    out << "cell,replicate,method,message\n";
    for (const auto& f : t.failures) {
        std::string msg = f.message;
        std::replace(msg.begin(), msg.end(), '"', '\'');
        out << f.cell << ',' << f.replicate << ',' << f.method << ",\"" << msg << "\"\n";
    }
    return out.str();
}

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    SimPlan plan;
    try {
        plan = parse_plan(parse_json_text(read_file(args.plan), args.plan.string()));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }
    if (args.full_scale)
        for (auto& c : plan.cells) c.replicates = c.outcome == OutcomeKind::BinomialSummary ? 10000 : 2000;
    if (args.threads) plan.threads = *args.threads;
    else if (plan.threads < 1) plan.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    plan.threads = std::max(1, plan.threads);

    MetricsTable table;
    try {
        table = run_operating_characteristics(plan, args.seed);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const nlohmann::json pj = plan_json(plan);
    try {
        fs::create_directories(args.out);
        write_file(args.out / "oc.csv", metrics_csv(table));
        write_file(args.out / "oc.json", metrics_json(table).dump(2) + "\n");
        write_file(args.out / "failures.csv", failures_csv(table));
        write_file(args.out / "manifest.json",
                   manifest_json("simulate", pj, fnv1a_hex(pj.dump()), args.seed, wall,
                                 {{"threads", plan.threads}, {"failed_replicates", table.failures.size()}})
                           .dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_input;
    }
    if (!table.failures.empty()) err << "warning: " << table.failures.size() << " method failures recorded in failures.csv\n";
    for (const auto& r : table.rows)
        if (r.metric == "rejection_rate" || r.metric == "bias" || r.metric == "mean_co_clustered")
            out << std::left << std::setw(22) << r.cell << std::setw(6) << r.method << std::setw(18) << r.metric
                << detail::display_value(r) << '\n';
    return exit_ok;
}

} // namespace dpborrow
