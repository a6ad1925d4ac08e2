#pragma once

// One entry point per analysis method, returning the chain plus the summaries
// reported by `analyze` and aggregated by the simulation harness.

#include "dpborrow/analysis.hpp"
#include "dpborrow/config.hpp"
#include "dpborrow/conjugate.hpp"
#include "dpborrow/ddpm.hpp"
#include "dpborrow/dpm.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpborrow {

enum class Method { CD = 0, PD = 1, DPM = 2, DDPM = 3 };

inline constexpr std::array<Method, 4> all_methods{Method::CD, Method::PD, Method::DPM, Method::DDPM};

inline const char* method_name(Method m) {
    switch (m) {
    case Method::CD: return "cd";
    case Method::PD: return "pd";
    case Method::DPM: return "dpm";
    case Method::DDPM: return "ddpm";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    for (Method m : all_methods)
        if (s == method_name(m)) return m;
    throw ConfigError("unknown method '" + std::string(s) + "'");
}

inline std::vector<Method> parse_method_list(std::string_view list) {
    std::vector<Method> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t comma = list.find(',', start);
        const auto item = list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (!item.empty()) {
            const Method m = parse_method(item);
            if (std::find(out.begin(), out.end(), m) != out.end()) throw ConfigError("method listed twice");
            out.push_back(m);
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty method list");
    return out;
}

inline Estimand estimand_for(const Dataset& ds) {
    return ds.outcome_kind == OutcomeKind::BinomialSummary ? Estimand::BinomialDiff : Estimand::IpdGamma;
}

struct MethodResult {
    Method method = Method::CD;
    PosteriorChain chain;
    EffectSummary summary;
    bool decision = false;
    std::optional<double> ehss;           // binomial only
    std::optional<double> co_clustered;   // mixture methods only
    std::vector<StudySbi> sbi;            // mixture methods with K > 0
};

inline PosteriorChain run_method_chain(Method m, const Dataset& ds, const AnalysisConfig& cfg, RngStream& rng) {
    const bool binomial = ds.outcome_kind == OutcomeKind::BinomialSummary;
    switch (m) {
    case Method::CD:
        if (binomial) return cd_binomial(ds, cfg.mcmc.treatment_prior, cfg.comparator_draws, rng);
        return to_chain(linear_regression_gibbs(ds, Pooling::CurrentOnly, cfg.linear_priors(), cfg.linear_options(), rng), "cd");
    case Method::PD:
        if (binomial) return pd_binomial(ds, cfg.mcmc.treatment_prior, cfg.comparator_draws, rng);
        return to_chain(linear_regression_gibbs(ds, Pooling::Pooled, cfg.linear_priors(), cfg.linear_options(), rng), "pd");
    case Method::DPM:
        if (!ds.current_treatment()) throw MissingArm("dataset has no current_treatment arm");
        return run_dpm(ds, cfg.dpm(), rng);
    case Method::DDPM:
        if (!ds.current_treatment()) throw MissingArm("dataset has no current_treatment arm");
        return run_ddpm(ds, cfg.ddpm(), rng);
    }
    throw ConfigError("unknown method");
}

inline MethodResult run_method(Method m, const Dataset& ds, const AnalysisConfig& cfg, RngStream& rng) {
    MethodResult r;
    r.method = m;
    r.chain = run_method_chain(m, ds, cfg, rng);
    r.chain.meta.config_digest = config_digest(cfg);
    const Estimand e = estimand_for(ds);
    const DecisionRule rule = cfg.rule(e);
    r.summary = effect_summary(r.chain, e, rule);
    r.decision = decide(r.summary, rule);
    if (e == Estimand::BinomialDiff) {
        try {
            r.ehss = ehss_moment_matched(r.chain, ds.current_control().summary().n);
        } catch (const DegenerateVariance&) {
            r.ehss.reset();
        }
    }
    if (r.chain.has_allocations()) {
        r.co_clustered = cluster_count_posterior(r.chain).mean_co_clustered;
        if (r.chain.num_controls() > 1) r.sbi = sbi(r.chain);
    }
    return r;
}

} // namespace dpborrow
