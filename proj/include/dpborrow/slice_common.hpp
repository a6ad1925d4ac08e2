#pragma once

// Pieces shared by the DPM and DDPM slice samplers.

#include "dpborrow/chain.hpp"
#include "dpborrow/distributions.hpp"
#include "dpborrow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dpborrow {

enum class MUpdate {
    EscobarWest,      // auxiliary-variable update given the number of occupied clusters
    StickConditional, // Gamma full conditional given the instantiated stick variables
};

/// Auto starts binomial chains in one cluster and IPD chains with one cluster
/// per study: under a diffuse coefficient base measure an empty component's atom
/// almost never lands near the data, so an IPD chain started together cannot split.
enum class InitMode { Auto, OneCluster, Singletons };

/// Settings shared by both engines.
struct DpmConfig {
    Beta base{0.5, 0.5};            // binomial base measure
    double coef_prior_sd = 1000.0;  // IPD base measure sd per coefficient
    Gamma m_prior{1.0, 5.0};        // (shape, scale)
    InverseGamma sigma2_prior{0.01, 0.01};
    double gamma_prior_sd = 1000.0;
    Beta treatment_prior{0.5, 0.5}; // pi_CT, analysed outside the mixture
    int iters = 22000;
    int burn_in = 2000;
    int thin = 1;
    MUpdate m_update = MUpdate::EscobarWest;
    std::optional<double> fixed_m;  // hold M constant
    InitMode init = InitMode::Auto;
    int max_components = 4096;

    void validate() const {
        if (iters <= burn_in || burn_in < 0) throw ConfigError("iters must exceed burn_in >= 0");
        if (thin < 1) throw ConfigError("thin must be at least 1");
        if (max_components < 1) throw ConfigError("max_components must be positive");
        if (fixed_m && !(*fixed_m > 0.0)) throw ConfigError("fixed M must be positive");
        dpborrow::validate(base);
        dpborrow::validate(m_prior);
        dpborrow::validate(sigma2_prior);
        dpborrow::validate(treatment_prior);
        if (!(coef_prior_sd > 0.0) || !(gamma_prior_sd > 0.0)) throw ConfigError("prior sds must be positive");
    }
};

namespace detail {

inline double log_beta(double a, double b) { return log_beta_fn(a, b); }

/// w_c = v_c prod_{c'<c} (1 - v_c'); returns the unallocated mass prod_c (1 - v_c).
inline double stick_weights(std::span<const double> v, std::vector<double>& w) {
    w.resize(v.size());
    double rest = 1.0;
    for (std::size_t c = 0; c < v.size(); ++c) {
        w[c] = v[c] * rest;
        rest *= 1.0 - v[c];
    }
    return rest;
}

inline int count_occupied(std::span<const int> z, std::vector<char>& seen) {
    int top = 0;
    for (int label : z) top = std::max(top, label + 1);
    seen.assign(static_cast<std::size_t>(top), 0);
    int k = 0;
    for (int label : z)
        if (!seen[static_cast<std::size_t>(label)]) {
            seen[static_cast<std::size_t>(label)] = 1;
            ++k;
        }
    return k;
}

inline int max_label(std::span<const int> z) {
    int top = -1;
    for (int label : z) top = std::max(top, label);
    return top;
}

/// Escobar-West update of M under a Gamma(a, scale b) prior given k occupied
/// clusters among n units: eta ~ Beta(M + 1, n), then M from the two-gamma
/// mixture with common rate 1/b - log(eta) and odds (a + k - 1) / (n * rate)
/// on the Gamma(a + k) component.
inline double escobar_west(double m, int k, int n, const Gamma& prior, RngStream& rng) {
    const double eta = draw(Beta{m + 1.0, static_cast<double>(n)}, rng);
    const double rate = 1.0 / prior.scale - std::log(eta);
    const double a = prior.shape;
    const double odds = (a + k - 1.0) / (static_cast<double>(n) * rate);
    const double p_upper = odds / (1.0 + odds);
    const double shape = rng.uniform_open() < p_upper ? a + k : a + k - 1.0;
    return draw(Gamma{shape, 1.0 / rate}, rng);
}

/// M | sticks for a Gamma(a, scale b) prior when `count` Beta(1, M) stick
/// variables with sum of log(1 - v) equal to `log_rest` are instantiated.
inline double stick_conditional_m(int count, double log_rest, const Gamma& prior, RngStream& rng) {
    const double rate = 1.0 / prior.scale - log_rest;
    return draw(Gamma{prior.shape + count, 1.0 / rate}, rng);
}

/// Groups unit indices by label: members[offsets[c] .. offsets[c+1]).
struct Membership {
    std::vector<int> offsets;
    std::vector<int> members;

    void build(std::span<const int> z, std::size_t num_components) {
        offsets.assign(num_components + 1, 0);
        for (int label : z) ++offsets[static_cast<std::size_t>(label) + 1];
        for (std::size_t c = 0; c < num_components; ++c) offsets[c + 1] += offsets[c];
        members.resize(z.size());
        std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t j = 0; j < z.size(); ++j)
            members[static_cast<std::size_t>(cursor[static_cast<std::size_t>(z[j])]++)] = static_cast<int>(j);
    }

    std::span<const int> of(std::size_t c) const {
        return {members.data() + offsets[c], static_cast<std::size_t>(offsets[c + 1] - offsets[c])};
    }
    int count(std::size_t c) const { return offsets[c + 1] - offsets[c]; }
};

template <class Sampler>
PosteriorChain run_chain(Sampler& sampler, const std::vector<std::string>& ids, OutcomeKind kind, int iters,
                         int burn_in, int thin, const char* method, const RngStream& rng) {
    PosteriorChain chain;
    chain.outcome_kind = kind;
    chain.control_ids = ids;
    const auto kept = static_cast<std::size_t>((iters - burn_in + thin - 1) / thin);
    chain.z.reserve(kept * ids.size());
    chain.m.reserve(kept);
    chain.k.reserve(kept);
    for (int it = 0; it < iters; ++it) {
        sampler.sweep();
        if (it >= burn_in && (it - burn_in) % thin == 0) sampler.record(chain);
    }
    chain.meta.method = method;
    chain.meta.seed = rng.seed();
    chain.meta.stream_id = rng.stream_id();
    chain.meta.iters = iters;
    chain.meta.burn_in = burn_in;
    chain.meta.thin = thin;
    return chain;
}

} // namespace detail

} // namespace dpborrow
