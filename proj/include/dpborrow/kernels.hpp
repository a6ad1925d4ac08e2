#pragma once

// Study-level likelihood kernels plugged into the DPM and DDPM samplers.
//
// A kernel describes the n control studies (historical first, current control
// last) and provides, for its Atom type:
//   draw_prior(rng)                              base-measure draw
//   draw_posterior(members, nuisance, rng)       conjugate update over member studies
//   log_lik(j, atom, nuisance)                   log f(y_j | atom), up to a j-only constant
//   step_nuisance(atom_of_cc, all atoms, z, nuisance, rng)
//   record(atom_of_cc, nuisance, chain, rng)     per-draw estimands

#include "dpborrow/chain.hpp"
#include "dpborrow/dataset.hpp"
#include "dpborrow/distributions.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace dpborrow {

/// Error variance and treatment coefficient of the normal linear kernel.
struct Nuisance {
    double sigma2 = 1.0;
    double gamma = 0.0;
};

class BinomialKernel {
public:
    using Atom = double;

    BinomialKernel(const Dataset& ds, Beta base, Beta treatment_prior = {0.5, 0.5}) : base_(base) {
        if (ds.outcome_kind != OutcomeKind::BinomialSummary) throw SchemaError("binomial kernel needs summary data");
        validate(base);
        for (const Study* s : ds.controls()) {
            ids_.push_back(s->id);
            y_.push_back(static_cast<double>(s->summary().responses));
            f_.push_back(static_cast<double>(s->summary().n - s->summary().responses));
        }
        if (const Study* ct = ds.current_treatment())
            treatment_posterior_ = Beta{treatment_prior.a + static_cast<double>(ct->summary().responses),
                                        treatment_prior.b + static_cast<double>(ct->summary().n - ct->summary().responses)};
    }

    std::size_t size() const { return y_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    OutcomeKind outcome_kind() const { return OutcomeKind::BinomialSummary; }

    Atom draw_prior(RngStream& rng) const { return draw(base_, rng); }

    Atom draw_posterior(std::span<const int> members, const Nuisance&, RngStream& rng) const {
        double a = base_.a, b = base_.b;
        for (int j : members) {
            a += y_[static_cast<std::size_t>(j)];
            b += f_[static_cast<std::size_t>(j)];
        }
        return draw(Beta{a, b}, rng);
    }

    double log_lik(std::size_t j, Atom p, const Nuisance&) const {
        const double ly = y_[j] > 0.0 ? y_[j] * std::log(p) : 0.0;
        const double lf = f_[j] > 0.0 ? f_[j] * std::log1p(-p) : 0.0;
        return ly + lf;
    }

    void step_nuisance(std::span<const Atom>, std::span<const int>, Nuisance&, RngStream&) const {}

    void record(Atom cc_atom, const Nuisance&, PosteriorChain& chain, RngStream& rng) const {
        chain.pi_cc.push_back(cc_atom);
        if (treatment_posterior_) chain.pi_ct.push_back(draw(*treatment_posterior_, rng));
    }

    Nuisance initial_nuisance() const { return {}; }

private:
    Beta base_;
    std::vector<std::string> ids_;
    std::vector<double> y_;
    std::vector<double> f_;
    std::optional<Beta> treatment_posterior_;
};

/// Likelihood identically one: the sampler then explores the prior over
/// partitions and sticks. Used for prior-partition and marginal-law checks.
class PriorOnlyKernel {
public:
    using Atom = double;

    explicit PriorOnlyKernel(std::size_t n) {
        for (std::size_t j = 0; j < n; ++j) ids_.push_back("S" + std::to_string(j + 1));
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    OutcomeKind outcome_kind() const { return OutcomeKind::BinomialSummary; }

    Atom draw_prior(RngStream& rng) const { return rng.uniform_open(); }
    Atom draw_posterior(std::span<const int>, const Nuisance&, RngStream& rng) const { return rng.uniform_open(); }
    double log_lik(std::size_t, Atom, const Nuisance&) const { return 0.0; }
    void step_nuisance(std::span<const Atom>, std::span<const int>, Nuisance&, RngStream&) const {}
    void record(Atom cc_atom, const Nuisance&, PosteriorChain& chain, RngStream&) const { chain.pi_cc.push_back(cc_atom); }
    Nuisance initial_nuisance() const { return {}; }

private:
    std::vector<std::string> ids_;
};

struct LinearKernelPriors {
    double coef_sd = 1000.0;               // base measure N(0, coef_sd^2 I) for cluster coefficients
    InverseGamma sigma2{0.01, 0.01};       // common error variance
    double gamma_sd = 1000.0;              // treatment coefficient prior N(0, gamma_sd^2)
};

/// Normal linear model y = x beta_{z_j} + gamma TRT + e, e ~ N(0, sigma^2), with
/// cluster-specific coefficient vectors and a common error variance. The current
/// trial's treatment rows share the current control's atom, offset by gamma.
class LinearKernel {
public:
    using Atom = Eigen::VectorXd;

    LinearKernel(const Dataset& ds, LinearKernelPriors priors) : priors_(priors) {
        if (ds.outcome_kind != OutcomeKind::Ipd) throw SchemaError("linear kernel needs participant data");
        p_ = static_cast<Eigen::Index>(ds.dimension());
        for (const Study* s : ds.controls()) {
            ids_.push_back(s->id);
            stats_.push_back(suff_stats(s->records()));
        }
        if (const Study* ct = ds.current_treatment()) {
            trt_ = suff_stats(ct->records());
            trt_colsum_ = Eigen::VectorXd::Zero(p_);
            trt_sumy_ = 0.0;
            for (const auto& r : ct->records()) {
                trt_colsum_ += Eigen::Map<const Eigen::VectorXd>(r.covariates.data(), p_);
                trt_sumy_ += r.outcome;
            }
        }
        total_rows_ = 0.0;
        for (const auto& s : stats_) total_rows_ += s.n;
        if (trt_) total_rows_ += trt_->n;
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    OutcomeKind outcome_kind() const { return OutcomeKind::Ipd; }
    Eigen::Index dimension() const { return p_; }

    Atom draw_prior(RngStream& rng) const {
        Atom b(p_);
        for (Eigen::Index i = 0; i < p_; ++i) b[i] = priors_.coef_sd * std_normal(rng);
        return b;
    }

    Atom draw_posterior(std::span<const int> members, const Nuisance& nu, RngStream& rng) const {
        if (members.empty()) return draw_prior(rng);
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p_, p_);
        Eigen::VectorXd lin = Eigen::VectorXd::Zero(p_);
        for (int j : members) {
            const Stats s = unit_stats(static_cast<std::size_t>(j), nu);
            q += s.xtx;
            lin += s.xty;
        }
        q /= nu.sigma2;
        lin /= nu.sigma2;
        q.diagonal().array() += 1.0 / (priors_.coef_sd * priors_.coef_sd);
        return draw_normal_canonical(q, lin, rng);
    }

    double log_lik(std::size_t j, const Atom& beta, const Nuisance& nu) const {
        const Stats s = unit_stats(j, nu);
        return -0.5 * ssr(s, beta) / nu.sigma2 - 0.5 * s.n * std::log(2.0 * std::numbers::pi * nu.sigma2);
    }

    /// sigma^2 ~ InverseGamma(a0 + N/2, b0 + SSR/2) over every row, then gamma
    /// from its normal full conditional given the current-trial treatment residuals.
    void step_nuisance(std::span<const Atom> atoms, std::span<const int> z, Nuisance& nu, RngStream& rng) const {
        double total = 0.0;
        for (std::size_t j = 0; j < stats_.size(); ++j)
            total += ssr(unit_stats(j, nu), atoms[static_cast<std::size_t>(z[j])]);
        nu.sigma2 = draw(InverseGamma{priors_.sigma2.shape + 0.5 * total_rows_, priors_.sigma2.scale + 0.5 * std::max(0.0, total)}, rng);
        if (trt_) {
            const Atom& beta_cc = atoms[static_cast<std::size_t>(z[stats_.size() - 1])];
            nu.gamma = draw_gamma_conditional(beta_cc, nu.sigma2, rng);
        }
    }

    double draw_gamma_conditional(const Atom& beta_cc, double sigma2, RngStream& rng) const {
        const double resid_sum = trt_sumy_ - trt_colsum_.dot(beta_cc);
        const double precision = trt_->n / sigma2 + 1.0 / (priors_.gamma_sd * priors_.gamma_sd);
        const double mean = (resid_sum / sigma2) / precision;
        return mean + std_normal(rng) / std::sqrt(precision);
    }

    void record(const Atom&, const Nuisance& nu, PosteriorChain& chain, RngStream&) const {
        chain.gamma.push_back(nu.gamma);
        chain.sigma2.push_back(nu.sigma2);
    }

    Nuisance initial_nuisance() const {
        // Start sigma^2 at the pooled control outcome variance.
        double sy = 0.0, syy = 0.0, n = 0.0;
        for (const auto& s : stats_) {
            sy += s.sumy;
            syy += s.yty;
            n += s.n;
        }
        const double var = std::max(1e-6, (syy - sy * sy / n) / n);
        return {var, 0.0};
    }

    bool has_treatment() const { return trt_.has_value(); }

private:
    struct Stats {
        Eigen::MatrixXd xtx;
        Eigen::VectorXd xty;
        double yty = 0.0;
        double sumy = 0.0;
        double n = 0.0;
    };

    Stats suff_stats(const std::vector<IpdRecord>& recs) const {
        Stats s{Eigen::MatrixXd::Zero(p_, p_), Eigen::VectorXd::Zero(p_), 0.0, 0.0, 0.0};
        for (const auto& r : recs) {
            const Eigen::Map<const Eigen::VectorXd> x(r.covariates.data(), p_);
            s.xtx.noalias() += x * x.transpose();
            s.xty += r.outcome * x;
            s.yty += r.outcome * r.outcome;
            s.sumy += r.outcome;
            s.n += 1.0;
        }
        return s;
    }

    // The current control's unit folds in the treatment rows with gamma removed.
    Stats unit_stats(std::size_t j, const Nuisance& nu) const {
        if (j + 1 != stats_.size() || !trt_) return stats_[j];
        const Stats& c = stats_[j];
        const double g = nu.gamma;
        return Stats{c.xtx + trt_->xtx, c.xty + trt_->xty - g * trt_colsum_,
                     c.yty + trt_->yty - 2.0 * g * trt_sumy_ + trt_->n * g * g, c.sumy + trt_sumy_ - trt_->n * g,
                     c.n + trt_->n};
    }

    static double ssr(const Stats& s, const Atom& beta) {
        return s.yty - 2.0 * beta.dot(s.xty) + beta.dot(s.xtx * beta);
    }

    LinearKernelPriors priors_;
    Eigen::Index p_ = 0;
    std::vector<std::string> ids_;
    std::vector<Stats> stats_;
    std::optional<Stats> trt_;
    Eigen::VectorXd trt_colsum_;
    double trt_sumy_ = 0.0;
    double total_rows_ = 0.0;
};

} // namespace dpborrow
