#pragma once

// Dependent DPM with shared atoms and two stick sequences: historical studies
// draw from G_H (sticks v_h) and the current control from G_CC (sticks v_cc).
// Per component, v_cc equals v_h (tied, b = 0) with probability 1 - phi and is
// an independent Beta(1, M) draw (b = 1) otherwise, so each measure is
// marginally DP(M, G0).
//
// Sweep: theta | z; (v_h, v_cc, b) | z jointly; u | v, z per group with both
// lists grown to one common length; z | u, v, theta against the study's own
// weights; M by Escobar-West on the pooled partition; phi | b.

#include "dpborrow/chain.hpp"
#include "dpborrow/kernels.hpp"
#include "dpborrow/slice_common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dpborrow {

enum class PhiUpdate { ConjugateIndicator, MetropolisHastings };

/// Which allocations inform each stick sequence. ByGroup: historical studies
/// for v_h, the current control for v_cc. AllUnits: every control study for both
/// sequences, with a tied stick seeing the counts twice.
enum class StickCounts { ByGroup, AllUnits };

struct DdpmConfig : DpmConfig {
    Beta phi_prior{2.0, 2.0};
    PhiUpdate phi_update = PhiUpdate::ConjugateIndicator;
    double mh_proposal_sd = 0.1;
    std::optional<double> fixed_phi; // hold phi constant (0 ties every stick, 1 unties every stick)
    StickCounts stick_counts = StickCounts::ByGroup;

    void validate() const {
        DpmConfig::validate();
        dpborrow::validate(phi_prior);
        if (!(mh_proposal_sd > 0.0)) throw ConfigError("mh_proposal_sd must be positive");
        if (fixed_phi && !(*fixed_phi >= 0.0 && *fixed_phi <= 1.0)) throw ConfigError("fixed phi must lie in [0,1]");
    }
};

struct DependentSticks {
    std::vector<double> v_h;
    std::vector<double> v_cc;
    std::vector<unsigned char> b; // 1: v_cc drawn fresh; 0: v_cc is v_h
    double phi = 0.5;
};

template <class Atom>
struct DdpmState {
    std::vector<int> z;
    std::vector<double> u;
    DependentSticks sticks;
    std::vector<double> w_h;
    std::vector<double> w_cc;
    double rest_h = 1.0;
    double rest_cc = 1.0;
    std::vector<Atom> atoms;
    double m = 1.0;
    Nuisance nuisance;

    std::size_t c_star() const { return sticks.v_h.size(); }
};

template <class Kernel>
class DdpmSampler {
public:
    using Atom = typename Kernel::Atom;
    using State = DdpmState<Atom>;

    DdpmSampler(const Kernel& kernel, DdpmConfig config, RngStream& rng)
        : kernel_(kernel), config_(std::move(config)), rng_(rng) {
        config_.validate();
        if (kernel_.size() == 0) throw ConfigError("no control studies");
        initialize();
    }

    const State& state() const { return state_; }
    State& mutable_state() { return state_; }
    const DdpmConfig& config() const { return config_; }

    /// Studies 0..K-1 are historical; the last one is the current control.
    std::size_t cc_index() const { return kernel_.size() - 1; }
    bool is_cc(std::size_t j) const { return j == cc_index(); }

    void initialize() {
        const std::size_t n = kernel_.size();
        state_ = State{};
        state_.nuisance = kernel_.initial_nuisance();
        state_.m = config_.fixed_m.value_or(draw(config_.m_prior, rng_));
        state_.sticks.phi = config_.fixed_phi.value_or(draw(config_.phi_prior, rng_));
        state_.z.assign(n, 0);
        if (config_.init == InitMode::Singletons)
            for (std::size_t j = 0; j < n; ++j) state_.z[j] = static_cast<int>(j);
        state_.u.assign(n, 0.0);
        step_theta();
        step_v_dependent();
        step_u();
    }

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

    /// Joint update of (v_h[c], v_cc[c], b_c) given z, with u integrated out.
    /// The tied branch has marginal weight
    ///   (1 - phi) B(1 + nH + nC, M + mH + mC) / B(1, M)
    /// and the untied branch
    ///   phi B(1 + nH, M + mH) B(1 + nC, M + mC) / B(1, M)^2.
    void step_v_dependent() {
        const std::size_t active = static_cast<std::size_t>(detail::max_label(state_.z) + 1);
        count_h_.assign(active, 0);
        count_cc_.assign(active, 0);
        const bool all_units = config_.stick_counts == StickCounts::AllUnits;
        for (std::size_t j = 0; j < state_.z.size(); ++j) {
            const auto label = static_cast<std::size_t>(state_.z[j]);
            if (all_units) {
                ++count_h_[label];
                ++count_cc_[label];
            } else {
                ++(is_cc(j) ? count_cc_ : count_h_)[label];
            }
        }
        auto& st = state_.sticks;
        st.v_h.resize(active);
        st.v_cc.resize(active);
        st.b.resize(active);
        const double m = state_.m;
        const double phi = st.phi;
        const double log_b1m = -std::log(m); // log B(1, M)
        int above_h = all_units ? static_cast<int>(state_.z.size()) : static_cast<int>(cc_index());
        int above_cc = all_units ? static_cast<int>(state_.z.size()) : 1;
        for (std::size_t c = 0; c < active; ++c) {
            const int nh = count_h_[c], nc = count_cc_[c];
            above_h -= nh;
            above_cc -= nc;
            const double tied_a = 1.0 + nh + nc, tied_b = m + above_h + above_cc;
            double p_untied;
            if (phi <= 0.0) p_untied = 0.0;
            else if (phi >= 1.0) p_untied = 1.0;
            else {
                const double log_tied = std::log1p(-phi) + detail::log_beta(tied_a, tied_b) - log_b1m;
                const double log_untied = std::log(phi) + detail::log_beta(1.0 + nh, m + above_h) +
                                          detail::log_beta(1.0 + nc, m + above_cc) - 2.0 * log_b1m;
                p_untied = 1.0 / (1.0 + std::exp(log_tied - log_untied));
            }
            if (rng_.uniform_open() < p_untied) {
                st.b[c] = 1;
                st.v_h[c] = draw(Beta{1.0 + nh, m + above_h}, rng_);
                st.v_cc[c] = draw(Beta{1.0 + nc, m + above_cc}, rng_);
            } else {
                st.b[c] = 0;
                st.v_h[c] = draw(Beta{tied_a, tied_b}, rng_);
                st.v_cc[c] = st.v_h[c];
            }
        }
        state_.atoms.resize(active, Atom{});
        state_.rest_h = detail::stick_weights(st.v_h, state_.w_h);
        state_.rest_cc = detail::stick_weights(st.v_cc, state_.w_cc);
    }

    /// u_j ~ Uniform(0, w^{(g)}_{z_j}) with g the study's group; both lists are
    /// then grown together until each group's unallocated mass is below its
    /// smallest slice variable.
    void step_u() {
        double umin_h = 1.0, umin_cc = 1.0;
        for (std::size_t j = 0; j < state_.z.size(); ++j) {
            const auto label = static_cast<std::size_t>(state_.z[j]);
            const double w = is_cc(j) ? state_.w_cc[label] : state_.w_h[label];
            state_.u[j] = w * rng_.uniform_open();
            (is_cc(j) ? umin_cc : umin_h) = std::min(is_cc(j) ? umin_cc : umin_h, state_.u[j]);
        }
        const bool any_h = cc_index() > 0;
        auto& st = state_.sticks;
        while ((any_h && !(state_.rest_h < umin_h)) || !(state_.rest_cc < umin_cc)) {
            if (static_cast<int>(st.v_h.size()) >= config_.max_components)
                throw SamplerAbort("component list exceeded " + std::to_string(config_.max_components) + " entries");
            const double vh = draw(Beta{1.0, state_.m}, rng_);
            const bool fresh = rng_.uniform_open() < st.phi;
            const double vcc = fresh ? draw(Beta{1.0, state_.m}, rng_) : vh;
            st.v_h.push_back(vh);
            st.v_cc.push_back(vcc);
            st.b.push_back(fresh ? 1 : 0);
            state_.w_h.push_back(vh * state_.rest_h);
            state_.w_cc.push_back(vcc * state_.rest_cc);
            state_.rest_h *= 1.0 - vh;
            state_.rest_cc *= 1.0 - vcc;
            state_.atoms.push_back(kernel_.draw_prior(rng_));
        }
    }

    void step_z() {
        const std::size_t len = state_.c_star();
        for (std::size_t j = 0; j < state_.z.size(); ++j) {
            const auto& w = is_cc(j) ? state_.w_cc : state_.w_h;
            logw_.clear();
            for (std::size_t c = 0; c < len; ++c)
                logw_.push_back(w[c] > state_.u[j] ? kernel_.log_lik(j, state_.atoms[c], state_.nuisance)
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
            const auto& st = state_.sticks;
            double log_rest = 0.0;
            int count = 0;
            const auto occupied_len = static_cast<std::size_t>(detail::max_label(state_.z) + 1);
            for (std::size_t c = 0; c < occupied_len; ++c) {
                log_rest += std::log1p(-st.v_h[c]);
                ++count;
                if (st.b[c]) {
                    log_rest += std::log1p(-st.v_cc[c]);
                    ++count;
                }
            }
            state_.m = detail::stick_conditional_m(count, log_rest, config_.m_prior, rng_);
        }
    }

    /// phi | b over components up to the largest occupied label. The conjugate form draws
    /// Beta(a + sum b, b + sum (1 - b)); the Metropolis-Hastings form proposes
    /// from a normal truncated to [0, 1] and corrects for the truncation mass.
    void step_phi() {
        auto& st = state_.sticks;
        if (config_.fixed_phi) {
            st.phi = *config_.fixed_phi;
            return;
        }
        const auto occupied_len = static_cast<std::size_t>(detail::max_label(state_.z) + 1);
        int untied = 0;
        for (std::size_t c = 0; c < occupied_len; ++c) untied += st.b[c];
        const int tied = static_cast<int>(occupied_len) - untied;
        if (config_.phi_update == PhiUpdate::ConjugateIndicator) {
            st.phi = draw(Beta{config_.phi_prior.a + untied, config_.phi_prior.b + tied}, rng_);
            return;
        }
        const double sd = config_.mh_proposal_sd;
        const double current = st.phi;
        const double proposal = draw(TruncatedNormal{current, sd, 0.0, 1.0}, rng_);
        const double log_r = log_phi_target(proposal, untied, tied) - log_phi_target(current, untied, tied) +
                             log_density(TruncatedNormal{proposal, sd, 0.0, 1.0}, current) -
                             log_density(TruncatedNormal{current, sd, 0.0, 1.0}, proposal);
        ++mh_proposals_;
        if (std::log(rng_.uniform_open()) < log_r) {
            st.phi = proposal;
            ++mh_accepts_;
        }
    }

    void step_nuisance() { kernel_.step_nuisance(state_.atoms, state_.z, state_.nuisance, rng_); }

    void sweep() {
        step_theta();
        step_v_dependent();
        step_u();
        step_z();
        step_m();
        step_phi();
        step_nuisance();
    }

    int occupied() { return detail::count_occupied(state_.z, seen_); }

    double mh_acceptance_rate() const { return mh_proposals_ ? static_cast<double>(mh_accepts_) / mh_proposals_ : 0.0; }

    void check_invariants() const {
        const auto& s = state_;
        const auto& st = s.sticks;
        if (st.v_h.size() != st.v_cc.size() || st.b.size() != st.v_h.size() || s.atoms.size() != st.v_h.size())
            throw SamplerAbort("stick lists out of step");
        for (std::size_t c = 0; c < st.v_h.size(); ++c) {
            if (!st.b[c] && st.v_cc[c] != st.v_h[c]) throw SamplerAbort("tied component with distinct sticks");
            for (double vc : {st.v_h[c], st.v_cc[c]})
                if (!(vc > 0.0 && vc < 1.0)) throw SamplerAbort("stick variable outside (0,1)");
        }
        auto check_weights = [](const std::vector<double>& v, const std::vector<double>& w) {
            double rest = 1.0, partial = 0.0;
            for (std::size_t c = 0; c < v.size(); ++c) {
                if (std::abs(w[c] - v[c] * rest) > 1e-12 * std::max(1.0, w[c])) throw SamplerAbort("weights inconsistent with sticks");
                partial += w[c];
                rest *= 1.0 - v[c];
            }
            if (!(partial < 1.0 + 1e-12)) throw SamplerAbort("weights sum to one or more");
            return rest;
        };
        const double rest_h = check_weights(st.v_h, s.w_h);
        const double rest_cc = check_weights(st.v_cc, s.w_cc);
        double umin_h = 1.0, umin_cc = 1.0;
        for (std::size_t j = 0; j < s.z.size(); ++j) {
            const auto label = static_cast<std::size_t>(s.z[j]);
            if (label >= st.v_h.size()) throw SamplerAbort("allocation beyond instantiated components");
            const double w = is_cc(j) ? s.w_cc[label] : s.w_h[label];
            if (!(s.u[j] > 0.0 && s.u[j] < w)) throw SamplerAbort("slice variable outside (0, w_z)");
            (is_cc(j) ? umin_cc : umin_h) = std::min(is_cc(j) ? umin_cc : umin_h, s.u[j]);
        }
        if (cc_index() > 0 && !(rest_h < umin_h)) throw SamplerAbort("historical slice bound violated");
        if (!(rest_cc < umin_cc)) throw SamplerAbort("current-control slice bound violated");
        if (!(st.phi >= 0.0 && st.phi <= 1.0)) throw SamplerAbort("phi outside [0,1]");
        if (!(s.m > 0.0)) throw SamplerAbort("non-positive concentration");
    }

    double log_likelihood() const {
        double total = 0.0;
        for (std::size_t j = 0; j < state_.z.size(); ++j)
            total += kernel_.log_lik(j, state_.atoms[static_cast<std::size_t>(state_.z[j])], state_.nuisance);
        return total;
    }

    void record(PosteriorChain& chain) {
        kernel_.record(state_.atoms[static_cast<std::size_t>(state_.z[cc_index()])], state_.nuisance, chain, rng_);
        for (int label : state_.z) chain.z.push_back(label);
        chain.m.push_back(state_.m);
        chain.k.push_back(occupied());
        chain.phi.push_back(state_.sticks.phi);
    }

private:
    // Log target for phi given the innovation indicators. The Beta(1, M) density
    // of untied current-control sticks is constant in phi and omitted.
    double log_phi_target(double phi, int untied, int tied) const {
        if (!(phi > 0.0 && phi < 1.0)) return -std::numeric_limits<double>::infinity();
        return log_density(config_.phi_prior, phi) + untied * std::log(phi) + tied * std::log1p(-phi);
    }

    const Kernel& kernel_;
    DdpmConfig config_;
    RngStream& rng_;
    State state_;
    detail::Membership membership_;
    std::vector<int> count_h_;
    std::vector<int> count_cc_;
    std::vector<char> seen_;
    std::vector<double> logw_;
    std::vector<double> scratch_;
    long mh_proposals_ = 0;
    long mh_accepts_ = 0;
};

template <class Kernel>
PosteriorChain run_ddpm_with(const Kernel& kernel, const DdpmConfig& config, RngStream& rng) {
    DdpmSampler<Kernel> sampler(kernel, config, rng);
    return detail::run_chain(sampler, kernel.ids(), kernel.outcome_kind(), config.iters, config.burn_in, config.thin,
                             "ddpm", rng);
}

inline PosteriorChain run_ddpm(const Dataset& ds, DdpmConfig config, RngStream& rng) {
    config.validate();
    const bool binomial = ds.outcome_kind == OutcomeKind::BinomialSummary;
    if (config.init == InitMode::Auto) config.init = binomial ? InitMode::OneCluster : InitMode::Singletons;
    if (binomial) return run_ddpm_with(BinomialKernel(ds, config.base, config.treatment_prior), config, rng);
    return run_ddpm_with(LinearKernel(ds, {config.coef_prior_sd, config.sigma2_prior, config.gamma_prior_sd}), config, rng);
}

} // namespace dpborrow
