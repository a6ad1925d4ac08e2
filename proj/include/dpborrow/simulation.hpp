#pragma once

// Scenario generators and the operating-characteristics harness.

#include "dpborrow/methods.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace dpborrow {

enum class Hypothesis { Null, Alternative };

inline const char* hypothesis_name(Hypothesis h) { return h == Hypothesis::Null ? "null" : "alternative"; }

inline Hypothesis parse_hypothesis(std::string_view s) {
    if (s == "null") return Hypothesis::Null;
    if (s == "alternative" || s == "alt") return Hypothesis::Alternative;
    throw ConfigError("unknown hypothesis '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// binomial scenarios

struct BinomialScenario {
    int scenario_id = 1; // 1..5
    Hypothesis hypothesis = Hypothesis::Null;
    int k = 8;
    std::int64_t n_historical = 60;
    std::int64_t n_cc = 20;
    std::int64_t n_ct = 40;
    double pi_control = 0.5;
    double pi_heterogeneous = 0.2;
    double pi_ct_alternative = 0.7452;
    double logit_sd = 0.5; // scenario 2

    /// Number of historical studies at the heterogeneous rate; they occupy the last slots.
    int heterogeneous() const {
        switch (scenario_id) {
        case 3: return 2;
        case 4: return 4;
        case 5: return 8;
        default: return 0;
        }
    }

    void validate() const {
        if (scenario_id < 1 || scenario_id > 5) throw ConfigError("binomial scenario must be 1..5");
        if (heterogeneous() > k) throw ConfigError("more heterogeneous studies than historical studies");
    }
};

struct BinomialReplicate {
    Dataset data;
    std::vector<double> control_rates; // H_1..H_K, CC
    double pi_ct = 0.5;
    int heterogeneous = 0;

    double true_effect() const { return pi_ct - control_rates.back(); }
};

inline BinomialReplicate generate_binomial_replicate(const BinomialScenario& scn, RngStream& rng) {
    scn.validate();
    BinomialReplicate rep;
    rep.heterogeneous = scn.heterogeneous();
    const int n_controls = scn.k + 1;
    for (int j = 0; j < n_controls; ++j) {
        double p = scn.pi_control;
        if (scn.scenario_id == 2) {
            const double eta = draw(Normal{0.0, scn.logit_sd}, rng);
            p = 1.0 / (1.0 + std::exp(-eta));
        } else if (j < scn.k && j >= scn.k - rep.heterogeneous) {
            p = scn.pi_heterogeneous;
        }
        rep.control_rates.push_back(p);
    }
    rep.pi_ct = scn.hypothesis == Hypothesis::Null ? scn.pi_control : scn.pi_ct_alternative;

    std::vector<Study> studies;
    for (int j = 0; j < scn.k; ++j)
        studies.push_back({"H" + std::to_string(j + 1), {RoleKind::Historical, j + 1},
                           BinomialSummary{scn.n_historical, draw(Binomial{scn.n_historical, rep.control_rates[static_cast<std::size_t>(j)]}, rng)}});
    studies.push_back({"CC", {RoleKind::CurrentControl, 0}, BinomialSummary{scn.n_cc, draw(Binomial{scn.n_cc, rep.control_rates.back()}, rng)}});
    studies.push_back({"CT", {RoleKind::CurrentTreatment, 0}, BinomialSummary{scn.n_ct, draw(Binomial{scn.n_ct, rep.pi_ct}, rng)}});
    rep.data = make_dataset(OutcomeKind::BinomialSummary, std::move(studies));
    return rep;
}

// ---------------------------------------------------------------------------
// IPD scenarios

struct IpdScenario {
    int scenario_id = 1; // 1..4
    Hypothesis hypothesis = Hypothesis::Null;
    int k = 5;
    int n_historical = 100;
    int n_arm = 60;
    double gamma_alternative = -2.885; // CD power of about one half
    double base_mean = 24.0;
    double base_heterogeneous = 30.0;
    double base_between_sd = 3.0; // scenario 2

    int heterogeneous() const { return scenario_id == 3 ? 1 : scenario_id == 4 ? 2 : 0; }
    double gamma() const { return hypothesis == Hypothesis::Null ? 0.0 : gamma_alternative; }

    void validate() const {
        if (scenario_id < 1 || scenario_id > 4) throw ConfigError("IPD scenario must be 1..4");
        if (heterogeneous() > k) throw ConfigError("more heterogeneous studies than historical studies");
    }
};

/// One generated participant, baseline included.
struct IpdSimRow {
    std::string study;
    int trt = 0;
    double y = 0.0;
    double age = 0.0;
    double sex = 0.0;
    double base = 0.0;
};

struct IpdReplicate {
    Dataset data;                   // analysis design: intercept, age, sex
    std::vector<IpdSimRow> rows;    // full generated table, baseline included
    std::vector<double> base_means; // H_1..H_K, current trial
    double gamma = 0.0;
    int heterogeneous = 0;

    double true_effect() const { return gamma; }
};

inline std::string ipd_rows_csv(const std::vector<IpdSimRow>& rows) {
    std::ostringstream out;
    out << std::setprecision(17) << "study,arm,y,age,sex,base\n";
    for (const auto& r : rows)
        out << r.study << ',' << (r.trt ? "treatment" : "control") << ',' << r.y << ',' << r.age << ',' << r.sex << ','
            << r.base << '\n';
    return out.str();
}

inline IpdReplicate generate_ipd_replicate(const IpdScenario& scn, RngStream& rng) {
    scn.validate();
    IpdReplicate rep;
    rep.gamma = scn.gamma();
    rep.heterogeneous = scn.heterogeneous();
    std::vector<Study> studies;
    auto make_rows = [&](const std::string& id, double mu_age, double pi_f, double mu_base, int n, int trt,
                         std::vector<IpdRecord>& recs) {
        for (int i = 0; i < n; ++i) {
            IpdSimRow r;
            r.study = id;
            r.trt = trt;
            r.age = draw(Normal{mu_age, 8.0}, rng);
            r.sex = static_cast<double>(draw_bernoulli(pi_f, rng));
            r.base = draw(Normal{mu_base, 8.0}, rng);
            r.y = 5.0 + 0.2 * (r.age - 50.0) + r.sex + r.base + rep.gamma * trt + std_normal(rng);
            recs.push_back({{1.0, r.age, r.sex}, trt, r.y});
            rep.rows.push_back(std::move(r));
        }
    };
    for (int j = 0; j <= scn.k; ++j) {
        const bool current = j == scn.k;
        double mu_base = scn.base_mean;
        if (scn.scenario_id == 2) mu_base = draw(Normal{scn.base_mean, scn.base_between_sd}, rng);
        else if (!current && j >= scn.k - rep.heterogeneous) mu_base = scn.base_heterogeneous;
        rep.base_means.push_back(mu_base);
        const double mu_age = draw(Uniform{71.0, 77.0}, rng);
        const double pi_f = draw(Uniform{0.5, 0.6}, rng);
        if (!current) {
            std::vector<IpdRecord> recs;
            const std::string id = "H" + std::to_string(j + 1);
            make_rows(id, mu_age, pi_f, mu_base, scn.n_historical, 0, recs);
            studies.push_back({id, {RoleKind::Historical, j + 1}, std::move(recs)});
        } else {
            std::vector<IpdRecord> cc, ct;
            make_rows("CC", mu_age, pi_f, mu_base, scn.n_arm, 0, cc);
            make_rows("CC", mu_age, pi_f, mu_base, scn.n_arm, 1, ct);
            studies.push_back({"CC", {RoleKind::CurrentControl, 0}, std::move(cc)});
            studies.push_back({detail::treatment_id("CC"), {RoleKind::CurrentTreatment, 0}, std::move(ct)});
        }
    }
    rep.data = make_dataset(OutcomeKind::Ipd, std::move(studies), {"age", "sex"});
    return rep;
}

// ---------------------------------------------------------------------------
// plan and results

struct SimCell {
    OutcomeKind outcome = OutcomeKind::BinomialSummary;
    int scenario = 1;
    Hypothesis hypothesis = Hypothesis::Null;
    int replicates = 1000;

    std::string label() const {
        return std::string(outcome == OutcomeKind::BinomialSummary ? "binomial" : "ipd") + "-sce" +
               std::to_string(scenario) + "-" + hypothesis_name(hypothesis);
    }
    std::uint64_t key() const {
        return (outcome == OutcomeKind::BinomialSummary ? 0u : 1u) * 1000u + static_cast<unsigned>(scenario) * 10u +
               (hypothesis == Hypothesis::Null ? 0u : 1u);
    }
};

struct SimPlan {
    std::vector<SimCell> cells;
    std::vector<Method> methods{Method::CD, Method::PD, Method::DPM, Method::DDPM};
    AnalysisConfig analysis;
    int threads = 1;
};

/// Per replicate and method: the quantities aggregated into the table.
struct ReplicateRecord {
    bool ok = false;
    std::string error;
    double truth = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    bool covered = false;
    bool rejected = false;
    double ehss = std::numeric_limits<double>::quiet_NaN();
    double co_clustered = std::numeric_limits<double>::quiet_NaN();
};

struct FailureEntry {
    std::string cell;
    int replicate = 0;
    std::string method;
    std::string message;
};

struct MetricRow {
    std::string cell;       // e.g. binomial-sce1-null
    std::string outcome;    // binomial | ipd
    int scenario = 0;
    std::string hypothesis;
    std::string method;
    std::string metric;     // bias, rmse, mean_sd, coverage, rejection_rate, mean_ehss, mean_co_clustered
    double value = 0.0;
    double mc_se = 0.0;
    int replicates = 0;     // used in the aggregate
    int failed = 0;         // excluded replicates

    bool operator==(const MetricRow&) const = default;
};

struct MetricsTable {
    std::vector<MetricRow> rows;
    std::vector<FailureEntry> failures;
    // Per cell, per method (plan order), per replicate.
    std::map<std::string, std::vector<std::vector<ReplicateRecord>>> records;

    const MetricRow* find(const std::string& cell, const std::string& method, const std::string& metric) const {
        for (const auto& r : rows)
            if (r.cell == cell && r.method == method && r.metric == metric) return &r;
        return nullptr;
    }
    double value(const std::string& cell, const std::string& method, const std::string& metric) const {
        const MetricRow* r = find(cell, method, metric);
        if (!r) throw MissingEstimand("no metric " + metric + " for " + method + " in " + cell);
        return r->value;
    }
};

namespace detail {

inline bool is_rate(const std::string& metric) { return metric == "coverage" || metric == "rejection_rate"; }

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw SchemaError("bad number '" + s + "' in metrics CSV");
    return v;
}

/// Display form: effect metrics and rates in percentage points for binomial
/// outcomes, raw units for IPD; one decimal for percentages.
inline std::string display_value(const MetricRow& r) {
    if (std::isnan(r.value)) return "";
    std::ostringstream out;
    const bool binomial = r.outcome == "binomial";
    if (is_rate(r.metric) || (binomial && (r.metric == "bias" || r.metric == "rmse" || r.metric == "mean_sd")))
        out << std::fixed << std::setprecision(1) << 100.0 * r.value;
    else
        out << std::fixed << std::setprecision(2) << r.value;
    return out.str();
}

inline void add_metrics(MetricsTable& table, const SimCell& cell, const std::string& method,
                        const std::vector<const ReplicateRecord*>& used, int failed) {
    const double n = static_cast<double>(used.size());
    auto row = [&](const char* metric, double value, double se) {
        table.rows.push_back({cell.label(), cell.outcome == OutcomeKind::BinomialSummary ? "binomial" : "ipd",
                              cell.scenario, hypothesis_name(cell.hypothesis), method, metric, value, se,
                              static_cast<int>(used.size()), failed});
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (used.empty()) {
        for (const char* m : {"bias", "rmse", "mean_sd", "coverage", "rejection_rate"}) row(m, nan, nan);
        return;
    }
    std::vector<double> err, sq, sds;
    double cover = 0.0, reject = 0.0;
    std::vector<double> ehss, co;
    for (const auto* r : used) {
        err.push_back(r->mean - r->truth);
        sq.push_back((r->mean - r->truth) * (r->mean - r->truth));
        sds.push_back(r->sd);
        cover += r->covered;
        reject += r->rejected;
        if (!std::isnan(r->ehss)) ehss.push_back(r->ehss);
        if (!std::isnan(r->co_clustered)) co.push_back(r->co_clustered);
    }
    auto se_mean = [](const std::vector<double>& x) {
        return x.size() > 1 ? std::sqrt(variance_of(x) / static_cast<double>(x.size())) : 0.0;
    };
    const double mse = mean_of(sq);
    const double rmse = std::sqrt(mse);
    row("bias", mean_of(err), se_mean(err));
    row("rmse", rmse, rmse > 0.0 ? se_mean(sq) / (2.0 * rmse) : 0.0);
    row("mean_sd", mean_of(sds), se_mean(sds));
    const double pc = cover / n, pr = reject / n;
    row("coverage", pc, std::sqrt(pc * (1.0 - pc) / n));
    row("rejection_rate", pr, std::sqrt(pr * (1.0 - pr) / n));
    if (!ehss.empty()) row("mean_ehss", mean_of(ehss), se_mean(ehss));
    if (!co.empty()) row("mean_co_clustered", mean_of(co), se_mean(co));
}

} // namespace detail

/// Runs one replicate of one cell for every method in the plan. Streams are
/// keyed by (replicate, cell) for data and (replicate, cell, method) for
/// analyses, so adding a method or a cell leaves the other draws unchanged.
inline std::vector<ReplicateRecord> run_replicate(const SimCell& cell, int replicate, const SimPlan& plan,
                                                  std::uint64_t master_seed) {
    const RngStream root(master_seed, static_cast<std::uint64_t>(replicate));
    RngStream data_rng = root.child(cell.key() << 8);
    Dataset ds;
    double truth = 0.0;
    if (cell.outcome == OutcomeKind::BinomialSummary) {
        BinomialScenario scn;
        scn.scenario_id = cell.scenario;
        scn.hypothesis = cell.hypothesis;
        auto rep = generate_binomial_replicate(scn, data_rng);
        truth = rep.true_effect();
        ds = std::move(rep.data);
    } else {
        IpdScenario scn;
        scn.scenario_id = cell.scenario;
        scn.hypothesis = cell.hypothesis;
        auto rep = generate_ipd_replicate(scn, data_rng);
        truth = rep.true_effect();
        ds = std::move(rep.data);
    }
    std::vector<ReplicateRecord> out;
    for (Method m : plan.methods) {
        ReplicateRecord r;
        r.truth = truth;
        RngStream rng = root.child((cell.key() << 8) | (1u + static_cast<unsigned>(m)));
        try {
            const MethodResult res = run_method(m, ds, plan.analysis, rng);
            r.ok = true;
            r.mean = res.summary.mean;
            r.sd = res.summary.sd;
            r.covered = res.summary.ci_lo <= truth && truth <= res.summary.ci_hi;
            r.rejected = res.decision;
            if (res.ehss) r.ehss = *res.ehss;
            if (res.co_clustered) r.co_clustered = *res.co_clustered;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

/// Deterministic for a given (plan, master_seed) whatever the thread count.
inline MetricsTable run_operating_characteristics(const SimPlan& plan, std::uint64_t master_seed) {
    plan.analysis.validate();
    if (plan.methods.empty()) throw ConfigError("plan has no methods");
    MetricsTable table;
    for (const auto& cell : plan.cells) {
        if (cell.replicates < 1) throw ConfigError("replicate count must be positive");
        if (cell.outcome == OutcomeKind::BinomialSummary) BinomialScenario{cell.scenario}.validate();
        else IpdScenario{cell.scenario}.validate();
        std::vector<std::vector<ReplicateRecord>> by_rep(static_cast<std::size_t>(cell.replicates));
        std::atomic<int> next{0};
        auto worker = [&] {
            for (int i = next++; i < cell.replicates; i = next++)
                by_rep[static_cast<std::size_t>(i)] = run_replicate(cell, i, plan, master_seed);
        };
        const int nthreads = std::max(1, std::min(plan.threads, cell.replicates));
        std::vector<std::thread> pool;
        for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        // Paired exclusion: a replicate failing any method leaves every aggregate.
        std::vector<char> keep(by_rep.size(), 1);
        for (std::size_t i = 0; i < by_rep.size(); ++i)
            for (std::size_t mi = 0; mi < plan.methods.size(); ++mi)
                if (!by_rep[i][mi].ok) {
                    keep[i] = 0;
                    table.failures.push_back({cell.label(), static_cast<int>(i), method_name(plan.methods[mi]), by_rep[i][mi].error});
                }
        const int failed = static_cast<int>(std::count(keep.begin(), keep.end(), 0));
        auto& recs = table.records[cell.label()];
        recs.assign(plan.methods.size(), {});
        for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
            std::vector<const ReplicateRecord*> used;
            for (std::size_t i = 0; i < by_rep.size(); ++i) {
                recs[mi].push_back(by_rep[i][mi]);
                if (keep[i]) used.push_back(&by_rep[i][mi]);
            }
            detail::add_metrics(table, cell, method_name(plan.methods[mi]), used, failed);
        }
    }
    return table;
}

/// Mean and standard error of per-replicate differences (a - b) of the
/// posterior-mean error, over replicates where both succeeded.
struct PairedDifference {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
    double z() const { return se > 0.0 ? mean / se : 0.0; }
};

inline PairedDifference paired_error_difference(const MetricsTable& t, const SimPlan& plan, const std::string& cell,
                                                Method a, Method b) {
    const auto& recs = t.records.at(cell);
    auto index = [&](Method m) {
        const auto it = std::find(plan.methods.begin(), plan.methods.end(), m);
        if (it == plan.methods.end()) throw ConfigError("method not in plan");
        return static_cast<std::size_t>(it - plan.methods.begin());
    };
    const auto& ra = recs[index(a)];
    const auto& rb = recs[index(b)];
    std::vector<double> d;
    for (std::size_t i = 0; i < ra.size(); ++i)
        if (ra[i].ok && rb[i].ok) d.push_back((ra[i].mean - ra[i].truth) - (rb[i].mean - rb[i].truth));
    PairedDifference p;
    p.n = static_cast<int>(d.size());
    if (d.empty()) return p;
    p.mean = mean_of(d);
    p.se = d.size() > 1 ? std::sqrt(variance_of(d) / static_cast<double>(d.size())) : 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// serialization

inline std::string metrics_csv(const MetricsTable& t) {
    std::ostringstream out;
    out << "cell,outcome,scenario,hypothesis,method,metric,value,mc_se,replicates,failed,display\n";
    for (const auto& r : t.rows)
        out << r.cell << ',' << r.outcome << ',' << r.scenario << ',' << r.hypothesis << ',' << r.method << ','
            << r.metric << ',' << detail::format_double(r.value) << ',' << detail::format_double(r.mc_se) << ','
            << r.replicates << ',' << r.failed << ',' << detail::display_value(r) << '\n';
    return out.str();
}

inline std::vector<MetricRow> parse_metrics_csv(std::string_view text) {
    std::vector<MetricRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("cell,outcome,scenario", 0) != 0) throw SchemaError("metrics CSV header missing");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 11) throw SchemaError("metrics CSV row has " + std::to_string(f.size()) + " fields");
        MetricRow r;
        r.cell = f[0];
        r.outcome = f[1];
        r.scenario = std::stoi(f[2]);
        r.hypothesis = f[3];
        r.method = f[4];
        r.metric = f[5];
        r.value = detail::parse_double(f[6]);
        r.mc_se = detail::parse_double(f[7]);
        r.replicates = std::stoi(f[8]);
        r.failed = std::stoi(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json metrics_json(const MetricsTable& t) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"cell", r.cell}, {"outcome", r.outcome}, {"scenario", r.scenario}, {"hypothesis", r.hypothesis},
                        {"method", r.method}, {"metric", r.metric}, {"value", num(r.value)}, {"mc_se", num(r.mc_se)},
                        {"replicates", r.replicates}, {"failed", r.failed}});
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : t.failures)
        failures.push_back({{"cell", f.cell}, {"replicate", f.replicate}, {"method", f.method}, {"message", f.message}});
    return {{"rows", rows}, {"failures", failures}};
}

} // namespace dpborrow
