#pragma once

// Dirichlet process mixture over control studies, sampled with Walker's slice
// scheme. One sweep is
//
//   theta | z        conjugate update per component (base measure if empty)
//   v | z            Beta(1 + n_c, M + m_c), u integrated out
//   u | v, z         Uniform(0, w_{z_j}), then the component list is grown
//                    until the unallocated stick mass falls below min_j u_j
//   z | u, v, theta  categorical over {c : w_c > u_j}, proportional to f(y_j | theta_c)
//   M                Escobar-West (or the stick-conditional Gamma update)
//   nuisance         sigma^2 and gamma for the normal linear kernel
//
// Drawing v before u is what makes the truncation exact.

#include "dpborrow/chain.hpp"
#include "dpborrow/kernels.hpp"
#include "dpborrow/slice_common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dpborrow {

template <class Atom>
struct ClusterState {
    std::vector<int> z;        // component label per control study, 0-based
    std::vector<double> u;     // slice variable per control study
    std::vector<double> v;     // stick variables, one per instantiated component
    std::vector<double> w;     // derived weights
    std::vector<Atom> atoms;   // one per instantiated component
    double m = 1.0;            // concentration
    Nuisance nuisance;         // IPD only
    double rest = 1.0;         // prod_c (1 - v_c), the mass beyond the list

    /// Number of instantiated components (the active bound c*).
    std::size_t c_star() const { return v.size(); }
};

template <class Kernel>
class DpmSampler {
public:
    using Atom = typename Kernel::Atom;
    using State = ClusterState<Atom>;

    DpmSampler(const Kernel& kernel, DpmConfig config, RngStream& rng)
        : kernel_(kernel), config_(std::move(config)), rng_(rng) {
        config_.validate();
        if (kernel_.size() == 0) throw ConfigError("no control studies");
        initialize();
    }

    const State& state() const { return state_; }
    State& mutable_state() { return state_; }
    const Kernel& kernel() const { return kernel_; }
    const DpmConfig& config() const { return config_; }

    void initialize() {
        const std::size_t n = kernel_.size();
        state_ = State{};
        state_.nuisance = kernel_.initial_nuisance();
        state_.m = config_.fixed_m.value_or(draw(config_.m_prior, rng_));
        state_.z.assign(n, 0);
        if (config_.init == InitMode::Singletons)
            for (std::size_t j = 0; j < n; ++j) state_.z[j] = static_cast<int>(j);
        state_.u.assign(n, 0.0);
        step_theta();
        step_v();
        step_u();
    }

    /// theta*_c | z for every component up to the largest occupied label.
    void step_theta() {
        const std::size_t active = static_cast<std::size_t>(detail::max_label(state_.z) + 1);
        state_.atoms.resize(active, Atom{});
        membership_.build(state_.z, active);
        for (std::size_t c = 0; c < active; ++c) {
            const auto members = membership_.of(c);
            state_.atoms[c] = members.empty() ? kernel_.draw_prior(rng_)
                                              : kernel_.draw_posterior(members, state_.nuisance, rng_);
        }
    }

    /// v_c | z ~ Beta(1 + n_c, M + m_c) for c up to the largest occupied label;
    /// the list is truncated there (higher components are redrawn from the prior).
    void step_v() {
        const std::size_t active = static_cast<std::size_t>(detail::max_label(state_.z) + 1);
        counts_.assign(active, 0);
        for (int label : state_.z) ++counts_[static_cast<std::size_t>(label)];
        state_.v.resize(active);
        int above = static_cast<int>(state_.z.size());
        for (std::size_t c = 0; c < active; ++c) {
            above -= counts_[c];
            state_.v[c] = draw(Beta{1.0 + counts_[c], state_.m + above}, rng_);
        }
        state_.atoms.resize(active, Atom{});
        state_.rest = detail::stick_weights(state_.v, state_.w);
    }

    /// u_j ~ Uniform(0, w_{z_j}), then grow the list with prior sticks and base
    /// draws until the unallocated mass is below min_j u_j.
    void step_u() {
        double u_min = 1.0;
        for (std::size_t j = 0; j < state_.z.size(); ++j) {
            state_.u[j] = state_.w[static_cast<std::size_t>(state_.z[j])] * rng_.uniform_open();
            u_min = std::min(u_min, state_.u[j]);
        }
        extend(u_min);
    }

    void step_z() {
        const std::size_t len = state_.c_star();
        for (std::size_t j = 0; j < state_.z.size(); ++j) {
            logw_.clear();
            for (std::size_t c = 0; c < len; ++c)
                logw_.push_back(state_.w[c] > state_.u[j] ? kernel_.log_lik(j, state_.atoms[c], state_.nuisance)
                                                          : -std::numeric_limits<double>::infinity());
            if (std::none_of(logw_.begin(), logw_.end(), [](double x) { return std::isfinite(x); }))
                throw SamplerAbort("empty slice for study " + kernel_.ids()[j]);
            state_.z[j] = static_cast<int>(draw_categorical_log(logw_, rng_, scratch_));
        }
    }

    void step_m() {
        if (config_.fixed_m) {
            state_.m = *config_.fixed_m;
            return;
        }
        if (config_.m_update == MUpdate::EscobarWest) {
            const int k = detail::count_occupied(state_.z, seen_);
            state_.m = detail::escobar_west(state_.m, k, static_cast<int>(state_.z.size()), config_.m_prior, rng_);
        } else {
            const int len = detail::max_label(state_.z) + 1;
            double log_rest = 0.0;
            for (int c = 0; c < len; ++c) log_rest += std::log1p(-state_.v[static_cast<std::size_t>(c)]);
            state_.m = detail::stick_conditional_m(len, log_rest, config_.m_prior, rng_);
        }
    }

    void step_nuisance() { kernel_.step_nuisance(state_.atoms, state_.z, state_.nuisance, rng_); }

    void sweep() {
        step_theta();
        step_v();
        step_u();
        step_z();
        step_m();
        step_nuisance();
    }

    int occupied() { return detail::count_occupied(state_.z, seen_); }

    /// Throws SamplerAbort describing the first violated state invariant.
    void check_invariants() const {
        const auto& s = state_;
        double partial = 0.0, rest = 1.0;
        for (std::size_t c = 0; c < s.v.size(); ++c) {
            if (!(s.v[c] > 0.0 && s.v[c] < 1.0)) throw SamplerAbort("stick variable outside (0,1)");
            const double expect = s.v[c] * rest;
            if (std::abs(s.w[c] - expect) > 1e-12 * std::max(1.0, expect)) throw SamplerAbort("weights inconsistent with sticks");
            if (!(s.w[c] > 0.0 && s.w[c] < 1.0)) throw SamplerAbort("weight outside (0,1)");
            partial += s.w[c];
            rest *= 1.0 - s.v[c];
        }
        if (!(partial < 1.0 + 1e-12)) throw SamplerAbort("weights sum to one or more");
        double u_min = 1.0;
        for (std::size_t j = 0; j < s.z.size(); ++j) {
            const auto label = static_cast<std::size_t>(s.z[j]);
            if (label >= s.v.size()) throw SamplerAbort("allocation beyond instantiated components");
            if (!(s.u[j] > 0.0 && s.u[j] < s.w[label])) throw SamplerAbort("slice variable outside (0, w_z)");
            u_min = std::min(u_min, s.u[j]);
        }
        if (!(rest < u_min)) throw SamplerAbort("slice sufficiency bound violated");
        if (!(s.m > 0.0)) throw SamplerAbort("non-positive concentration");
        if (!(s.nuisance.sigma2 > 0.0)) throw SamplerAbort("non-positive error variance");
    }

    double log_likelihood() const {
        double total = 0.0;
        for (std::size_t j = 0; j < state_.z.size(); ++j)
            total += kernel_.log_lik(j, state_.atoms[static_cast<std::size_t>(state_.z[j])], state_.nuisance);
        return total;
    }

    /// Appends the estimands of the current state to `chain`.
    void record(PosteriorChain& chain) {
        const std::size_t cc = state_.z.size() - 1;
        kernel_.record(state_.atoms[static_cast<std::size_t>(state_.z[cc])], state_.nuisance, chain, rng_);
        for (int label : state_.z) chain.z.push_back(label);
        chain.m.push_back(state_.m);
        chain.k.push_back(occupied());
    }

private:
    void extend(double u_min) {
        while (!(state_.rest < u_min)) {
            if (static_cast<int>(state_.v.size()) >= config_.max_components)
                throw SamplerAbort("component list exceeded " + std::to_string(config_.max_components) + " entries");
            const double vc = draw(Beta{1.0, state_.m}, rng_);
            state_.v.push_back(vc);
            state_.w.push_back(vc * state_.rest);
            state_.rest *= 1.0 - vc;
            state_.atoms.push_back(kernel_.draw_prior(rng_));
        }
    }

    const Kernel& kernel_;
    DpmConfig config_;
    RngStream& rng_;
    State state_;
    detail::Membership membership_;
    std::vector<int> counts_;
    std::vector<char> seen_;
    std::vector<double> logw_;
    std::vector<double> scratch_;
};

template <class Kernel>
PosteriorChain run_dpm_with(const Kernel& kernel, const DpmConfig& config, RngStream& rng) {
    DpmSampler<Kernel> sampler(kernel, config, rng);
    return detail::run_chain(sampler, kernel.ids(), kernel.outcome_kind(), config.iters, config.burn_in, config.thin,
                             "dpm", rng);
}

inline PosteriorChain run_dpm(const Dataset& ds, DpmConfig config, RngStream& rng) {
    config.validate();
    const bool binomial = ds.outcome_kind == OutcomeKind::BinomialSummary;
    if (config.init == InitMode::Auto) config.init = binomial ? InitMode::OneCluster : InitMode::Singletons;
    if (binomial) return run_dpm_with(BinomialKernel(ds, config.base, config.treatment_prior), config, rng);
    return run_dpm_with(LinearKernel(ds, {config.coef_prior_sd, config.sigma2_prior, config.gamma_prior_sd}), config, rng);
}

} // namespace dpborrow
