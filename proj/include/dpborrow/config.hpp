#pragma once

// Analysis configuration shared by `analyze` and `simulate`, with its JSON form.
// Missing keys keep their defaults; unknown keys are rejected.

#include "dpborrow/analysis.hpp"
#include "dpborrow/conjugate.hpp"
#include "dpborrow/ddpm.hpp"
#include "dpborrow/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <set>
#include <string>

namespace dpborrow {

struct AnalysisConfig {
    DdpmConfig mcmc;                  // DPM reads its DpmConfig part
    std::size_t comparator_draws = 100000;
    double threshold = 0.975;

    DpmConfig dpm() const { return static_cast<const DpmConfig&>(mcmc); }
    const DdpmConfig& ddpm() const { return mcmc; }
    LinearPriors linear_priors() const { return {mcmc.coef_prior_sd, mcmc.sigma2_prior}; }
    LinearGibbsOptions linear_options() const { return {mcmc.iters, mcmc.burn_in, std::nullopt}; }

    DecisionRule rule(Estimand e) const {
        DecisionRule r = default_rule(e);
        r.threshold = threshold;
        return r;
    }

    void validate() const {
        mcmc.validate();
        if (comparator_draws < 2) throw ConfigError("comparator_draws must be at least 2");
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
    }
};

namespace detail {

inline const char* to_string(MUpdate m) { return m == MUpdate::EscobarWest ? "escobar_west" : "stick_conditional"; }
inline const char* to_string(PhiUpdate p) { return p == PhiUpdate::ConjugateIndicator ? "conjugate" : "metropolis_hastings"; }
inline const char* to_string(StickCounts s) { return s == StickCounts::ByGroup ? "by_group" : "all_units"; }
inline const char* to_string(InitMode i) { return i == InitMode::Auto ? "auto" : i == InitMode::OneCluster ? "one_cluster" : "singletons"; }

template <class T>
T json_get(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline nlohmann::json pair_json(double a, double b, const char* ka, const char* kb) { return {{ka, a}, {kb, b}}; }

inline void read_pair(const nlohmann::json& j, const char* key, const char* ka, const char* kb, double& a, double& b) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
    if (v.contains(ka)) a = json_get<double>(v, ka);
    if (v.contains(kb)) b = json_get<double>(v, kb);
}

} // namespace detail

inline nlohmann::json to_json(const AnalysisConfig& c) {
    using detail::pair_json;
    const auto& m = c.mcmc;
    nlohmann::json j{
        {"base", pair_json(m.base.a, m.base.b, "a", "b")},
        {"treatment_prior", pair_json(m.treatment_prior.a, m.treatment_prior.b, "a", "b")},
        {"m_prior", pair_json(m.m_prior.shape, m.m_prior.scale, "shape", "scale")},
        {"sigma2_prior", pair_json(m.sigma2_prior.shape, m.sigma2_prior.scale, "shape", "scale")},
        {"phi_prior", pair_json(m.phi_prior.a, m.phi_prior.b, "a", "b")},
        {"coef_prior_sd", m.coef_prior_sd},
        {"gamma_prior_sd", m.gamma_prior_sd},
        {"iters", m.iters},
        {"burn_in", m.burn_in},
        {"thin", m.thin},
        {"m_update", detail::to_string(m.m_update)},
        {"phi_update", detail::to_string(m.phi_update)},
        {"stick_counts", detail::to_string(m.stick_counts)},
        {"init", detail::to_string(m.init)},
        {"mh_proposal_sd", m.mh_proposal_sd},
        {"max_components", m.max_components},
        {"comparator_draws", c.comparator_draws},
        {"threshold", c.threshold},
    };
    j["fixed_m"] = m.fixed_m ? nlohmann::json(*m.fixed_m) : nlohmann::json(nullptr);
    j["fixed_phi"] = m.fixed_phi ? nlohmann::json(*m.fixed_phi) : nlohmann::json(nullptr);
    return j;
}

inline AnalysisConfig analysis_config_from_json(const nlohmann::json& j) {
    using detail::json_get;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{
        "base", "treatment_prior", "m_prior", "sigma2_prior", "phi_prior", "coef_prior_sd", "gamma_prior_sd",
        "iters", "burn_in", "thin", "m_update", "phi_update", "stick_counts", "init", "mh_proposal_sd",
        "max_components", "comparator_draws", "threshold", "fixed_m", "fixed_phi"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

    AnalysisConfig c;
    auto& m = c.mcmc;
    detail::read_pair(j, "base", "a", "b", m.base.a, m.base.b);
    detail::read_pair(j, "treatment_prior", "a", "b", m.treatment_prior.a, m.treatment_prior.b);
    detail::read_pair(j, "m_prior", "shape", "scale", m.m_prior.shape, m.m_prior.scale);
    detail::read_pair(j, "sigma2_prior", "shape", "scale", m.sigma2_prior.shape, m.sigma2_prior.scale);
    detail::read_pair(j, "phi_prior", "a", "b", m.phi_prior.a, m.phi_prior.b);
    if (j.contains("coef_prior_sd")) m.coef_prior_sd = json_get<double>(j, "coef_prior_sd");
    if (j.contains("gamma_prior_sd")) m.gamma_prior_sd = json_get<double>(j, "gamma_prior_sd");
    if (j.contains("iters")) m.iters = json_get<int>(j, "iters");
    if (j.contains("burn_in")) m.burn_in = json_get<int>(j, "burn_in");
    if (j.contains("thin")) m.thin = json_get<int>(j, "thin");
    if (j.contains("mh_proposal_sd")) m.mh_proposal_sd = json_get<double>(j, "mh_proposal_sd");
    if (j.contains("max_components")) m.max_components = json_get<int>(j, "max_components");
    if (j.contains("comparator_draws")) c.comparator_draws = json_get<std::size_t>(j, "comparator_draws");
    if (j.contains("threshold")) c.threshold = json_get<double>(j, "threshold");
    if (j.contains("fixed_m") && !j.at("fixed_m").is_null()) m.fixed_m = json_get<double>(j, "fixed_m");
    if (j.contains("fixed_phi") && !j.at("fixed_phi").is_null()) m.fixed_phi = json_get<double>(j, "fixed_phi");

    auto choice = [&](const char* key, auto& field, auto a, auto b) {
        if (!j.contains(key)) return;
        const auto s = json_get<std::string>(j, key);
        if (s == detail::to_string(a)) field = a;
        else if (s == detail::to_string(b)) field = b;
        else throw ConfigError(std::string("config key '") + key + "': unknown value '" + s + "'");
    };
    choice("m_update", m.m_update, MUpdate::EscobarWest, MUpdate::StickConditional);
    choice("phi_update", m.phi_update, PhiUpdate::ConjugateIndicator, PhiUpdate::MetropolisHastings);
    choice("stick_counts", m.stick_counts, StickCounts::ByGroup, StickCounts::AllUnits);
    if (j.contains("init")) {
        const auto s = json_get<std::string>(j, "init");
        if (s == "auto") m.init = InitMode::Auto;
        else if (s == "one_cluster") m.init = InitMode::OneCluster;
        else if (s == "singletons") m.init = InitMode::Singletons;
        else throw ConfigError("config key 'init': unknown value '" + s + "'");
    }
    try {
        c.validate();
    } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    return out;
}

/// Digest of the resolved configuration; key order and omitted defaults do not matter.
inline std::string config_digest(const AnalysisConfig& c) { return fnv1a_hex(to_json(c).dump()); }

} // namespace dpborrow
