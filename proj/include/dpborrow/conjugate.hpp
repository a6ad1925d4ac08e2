#pragma once

// Current-data (CD) and pooled-data (PD) comparator analyses.

#include "dpborrow/chain.hpp"
#include "dpborrow/dataset.hpp"
#include "dpborrow/distributions.hpp"

#include <Eigen/Dense>
#include <Eigen/QR>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dpborrow {

using BetaPosterior = Beta;

struct BinomialPosteriors {
    BetaPosterior control;
    BetaPosterior treatment;
};

namespace detail {

inline const BinomialSummary& treatment_summary(const Dataset& ds) {
    if (ds.outcome_kind != OutcomeKind::BinomialSummary) throw SchemaError("binomial analysis on a non-binomial dataset");
    const Study* ct = ds.current_treatment();
    if (!ct) throw MissingArm("dataset has no current_treatment arm");
    return ct->summary();
}

inline Beta conjugate_update(const Beta& prior, std::int64_t responses, std::int64_t n) {
    return {prior.a + static_cast<double>(responses), prior.b + static_cast<double>(n - responses)};
}

inline PosteriorChain sample_two_betas(const BinomialPosteriors& post, std::size_t n_draws, RngStream& rng,
                                       const char* method) {
    PosteriorChain chain;
    chain.outcome_kind = OutcomeKind::BinomialSummary;
    chain.pi_cc.reserve(n_draws);
    chain.pi_ct.reserve(n_draws);
    for (std::size_t i = 0; i < n_draws; ++i) {
        chain.pi_cc.push_back(draw(post.control, rng));
        chain.pi_ct.push_back(draw(post.treatment, rng));
    }
    chain.meta.method = method;
    chain.meta.seed = rng.seed();
    chain.meta.stream_id = rng.stream_id();
    chain.meta.iters = static_cast<int>(n_draws);
    return chain;
}

} // namespace detail

/// Exact posteriors using only the current trial.
inline BinomialPosteriors cd_posteriors(const Dataset& ds, const Beta& prior = {0.5, 0.5}) {
    const auto& ct = detail::treatment_summary(ds);
    const auto& cc = ds.current_control().summary();
    return {detail::conjugate_update(prior, cc.responses, cc.n), detail::conjugate_update(prior, ct.responses, ct.n)};
}

/// Exact posteriors with all controls pooled into one binomial sample.
inline BinomialPosteriors pd_posteriors(const Dataset& ds, const Beta& prior = {0.5, 0.5}) {
    const auto& ct = detail::treatment_summary(ds);
    std::int64_t y = 0, n = 0;
    for (const Study* s : ds.controls()) {
        y += s->summary().responses;
        n += s->summary().n;
    }
    return {detail::conjugate_update(prior, y, n), detail::conjugate_update(prior, ct.responses, ct.n)};
}

/// Independent draws of (pi_CC, pi_CT); effect draws are pi_ct - pi_cc.
inline PosteriorChain cd_binomial(const Dataset& ds, const Beta& prior, std::size_t n_draws, RngStream& rng) {
    return detail::sample_two_betas(cd_posteriors(ds, prior), n_draws, rng, "cd");
}

inline PosteriorChain pd_binomial(const Dataset& ds, const Beta& prior, std::size_t n_draws, RngStream& rng) {
    return detail::sample_two_betas(pd_posteriors(ds, prior), n_draws, rng, "pd");
}

inline std::vector<double> effect_draws(const PosteriorChain& chain) {
    std::vector<double> out(chain.pi_cc.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = chain.pi_ct[i] - chain.pi_cc[i];
    return out;
}

// ---------------------------------------------------------------------------
// Normal linear model with common coefficients

enum class Pooling { CurrentOnly, Pooled };

struct LinearPriors {
    double coef_sd = 1000.0; // independent N(0, coef_sd^2) on every coefficient, treatment included
    InverseGamma sigma2{0.01, 0.01};
};

struct LinearGibbsOptions {
    int iters = 22000;
    int burn_in = 2000;
    std::optional<double> fixed_sigma2; // hold sigma^2 at this value (oracle checks)
};

struct LinearModelPosterior {
    std::vector<std::string> coefficient_names; // intercept, covariates..., trt
    Eigen::MatrixXd beta;                         // one retained draw per row
    std::vector<double> sigma2;

    std::vector<double> treatment_draws() const {
        std::vector<double> out(static_cast<std::size_t>(beta.rows()));
        for (Eigen::Index i = 0; i < beta.rows(); ++i) out[static_cast<std::size_t>(i)] = beta(i, beta.cols() - 1);
        return out;
    }
};

/// Design matrix [covariates..., TRT] and outcome vector for the selected studies.
struct LinearDesign {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

inline LinearDesign linear_design(const Dataset& ds, Pooling pooling) {
    if (ds.outcome_kind != OutcomeKind::Ipd) throw SchemaError("linear model needs an IPD dataset");
    if (!ds.current_treatment()) throw MissingArm("dataset has no current_treatment arm");
    std::vector<const IpdRecord*> rows;
    for (const auto& s : ds.studies) {
        if (pooling == Pooling::CurrentOnly && s.role.kind == RoleKind::Historical) continue;
        for (const auto& r : s.records()) rows.push_back(&r);
    }
    const auto p = static_cast<Eigen::Index>(ds.dimension());
    LinearDesign d{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), p + 1),
                   Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
        const auto& r = *rows[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < p; ++c) d.x(i, c) = r.covariates[static_cast<std::size_t>(c)];
        d.x(i, p) = r.treatment_indicator;
        d.y[i] = r.outcome;
    }
    return d;
}

/// Two-block Gibbs sampler: beta | sigma^2 multivariate normal, sigma^2 | beta
/// inverse gamma.
inline LinearModelPosterior linear_regression_gibbs(const Dataset& ds, Pooling pooling, const LinearPriors& priors,
                                                    const LinearGibbsOptions& opts, RngStream& rng) {
    if (opts.iters <= opts.burn_in || opts.burn_in < 0) throw ConfigError("iters must exceed burn_in >= 0");
    const LinearDesign d = linear_design(ds, pooling);
    const Eigen::Index p = d.x.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw RankDeficient("design matrix is rank deficient");

    const Eigen::MatrixXd xtx = d.x.transpose() * d.x;
    const Eigen::VectorXd xty = d.x.transpose() * d.y;
    const double yty = d.y.squaredNorm();
    const double n = static_cast<double>(d.x.rows());
    const double prior_precision = 1.0 / (priors.coef_sd * priors.coef_sd);

    LinearModelPosterior post;
    post.coefficient_names.push_back("intercept");
    for (const auto& c : ds.covariate_names) post.coefficient_names.push_back(c);
    post.coefficient_names.push_back("trt");
    const int kept = opts.iters - opts.burn_in;
    post.beta.resize(kept, p);
    post.sigma2.reserve(static_cast<std::size_t>(kept));

    double sigma2 = opts.fixed_sigma2.value_or(std::max(1e-8, (yty - d.y.sum() * d.y.sum() / n) / n));
    Eigen::MatrixXd precision(p, p);
    for (int it = 0; it < opts.iters; ++it) {
        precision = xtx / sigma2;
        precision.diagonal().array() += prior_precision;
        const Eigen::VectorXd beta = draw_normal_canonical(precision, xty / sigma2, rng);
        if (!opts.fixed_sigma2) {
            const double ssr = std::max(0.0, yty - 2.0 * beta.dot(xty) + beta.dot(xtx * beta));
            sigma2 = draw(InverseGamma{priors.sigma2.shape + 0.5 * n, priors.sigma2.scale + 0.5 * ssr}, rng);
        }
        if (it >= opts.burn_in) {
            post.beta.row(it - opts.burn_in) = beta.transpose();
            post.sigma2.push_back(sigma2);
        }
    }
    return post;
}

/// Wraps treatment-coefficient and variance draws as a chain for the shared
/// posterior summaries.
inline PosteriorChain to_chain(const LinearModelPosterior& post, const char* method) {
    PosteriorChain chain;
    chain.outcome_kind = OutcomeKind::Ipd;
    chain.gamma = post.treatment_draws();
    chain.sigma2 = post.sigma2;
    chain.meta.method = method;
    return chain;
}

} // namespace dpborrow
