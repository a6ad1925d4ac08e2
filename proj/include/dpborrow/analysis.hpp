#pragma once

// Posterior summaries: treatment effect, decision rule, SBI, cluster counts and
// a moment-matched effective historical sample size.

#include "dpborrow/chain.hpp"
#include "dpborrow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace dpborrow {

enum class Estimand { BinomialDiff, IpdGamma };

enum class Direction { Greater, Less };

struct DecisionRule {
    Direction direction = Direction::Greater;
    double threshold = 0.975;
    double margin = 0.0; // Pr(effect > margin) or Pr(effect < margin)
};

/// Default rule per outcome: response-rate gain for binomial, outcome decrease for IPD.
inline DecisionRule default_rule(Estimand e) {
    return e == Estimand::BinomialDiff ? DecisionRule{Direction::Greater, 0.975, 0.0}
                                       : DecisionRule{Direction::Less, 0.975, 0.0};
}

struct EffectSummary {
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double prob = 0.0; // directed posterior probability under the rule
};

/// Type-7 (linear interpolation) quantile of sorted values.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw MissingEstimand("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

inline EffectSummary summarize(std::span<const double> draws, const DecisionRule& rule = {}) {
    if (draws.empty()) throw MissingEstimand("no draws to summarize");
    EffectSummary s;
    s.mean = mean_of(draws);
    s.sd = std::sqrt(variance_of(draws));
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    s.ci_lo = quantile_sorted(sorted, 0.025);
    s.ci_hi = quantile_sorted(sorted, 0.975);
    std::size_t hits = 0;
    for (double d : draws)
        if (rule.direction == Direction::Greater ? d > rule.margin : d < rule.margin) ++hits;
    s.prob = static_cast<double>(hits) / static_cast<double>(draws.size());
    return s;
}

inline std::vector<double> estimand_draws(const PosteriorChain& chain, Estimand e) {
    if (e == Estimand::IpdGamma) {
        if (chain.gamma.empty()) throw MissingEstimand("chain has no treatment-coefficient draws");
        return chain.gamma;
    }
    if (chain.pi_cc.empty() || chain.pi_ct.size() != chain.pi_cc.size())
        throw MissingEstimand("chain lacks paired pi_CC / pi_CT draws");
    std::vector<double> d(chain.pi_cc.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = chain.pi_ct[i] - chain.pi_cc[i];
    return d;
}

inline EffectSummary effect_summary(const PosteriorChain& chain, Estimand e, const DecisionRule& rule) {
    return summarize(estimand_draws(chain, e), rule);
}

inline EffectSummary effect_summary(const PosteriorChain& chain, Estimand e) {
    return effect_summary(chain, e, default_rule(e));
}

inline bool decide(const EffectSummary& s, const DecisionRule& rule = {}) { return s.prob > rule.threshold; }

struct StudySbi {
    std::string study;
    double sbi;
};

/// Fraction of retained draws in which each historical study shares the
/// current control's component.
inline std::vector<StudySbi> sbi(const PosteriorChain& chain) {
    if (!chain.has_allocations()) throw MissingEstimand("chain has no allocation draws");
    const std::size_t n = chain.num_controls();
    const std::size_t draws = chain.z.size() / n;
    std::vector<std::size_t> hits(n - 1, 0);
    for (std::size_t d = 0; d < draws; ++d) {
        const auto cc = chain.allocation(d, n - 1);
        for (std::size_t j = 0; j + 1 < n; ++j)
            if (chain.allocation(d, j) == cc) ++hits[j];
    }
    std::vector<StudySbi> out;
    for (std::size_t j = 0; j + 1 < n; ++j)
        out.push_back({chain.control_ids[j], static_cast<double>(hits[j]) / static_cast<double>(draws)});
    return out;
}

struct ClusterCountPosterior {
    std::map<int, double> pmf;   // k -> posterior probability
    double mean_k = 0.0;
    double mean_co_clustered = 0.0; // historical studies sharing the current control's component

    int mode() const {
        int best = 0;
        double p = -1.0;
        for (const auto& [k, pk] : pmf)
            if (pk > p) {
                best = k;
                p = pk;
            }
        return best;
    }
    double prob(int k) const {
        const auto it = pmf.find(k);
        return it == pmf.end() ? 0.0 : it->second;
    }
};

inline ClusterCountPosterior cluster_count_posterior(const PosteriorChain& chain) {
    if (!chain.has_allocations()) throw MissingEstimand("chain has no allocation draws");
    const std::size_t n = chain.num_controls();
    const std::size_t draws = chain.z.size() / n;
    ClusterCountPosterior out;
    std::vector<std::int32_t> labels;
    double co = 0.0, ksum = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        labels.assign(chain.z.begin() + static_cast<std::ptrdiff_t>(d * n),
                      chain.z.begin() + static_cast<std::ptrdiff_t>((d + 1) * n));
        const auto cc = labels.back();
        for (std::size_t j = 0; j + 1 < n; ++j) co += labels[j] == cc;
        std::sort(labels.begin(), labels.end());
        const int k = static_cast<int>(std::unique(labels.begin(), labels.end()) - labels.begin());
        out.pmf[k] += 1.0;
        ksum += k;
    }
    for (auto& [k, c] : out.pmf) c /= static_cast<double>(draws);
    out.mean_k = ksum / static_cast<double>(draws);
    out.mean_co_clustered = co / static_cast<double>(draws);
    return out;
}

/// ESS of a single beta matched to the mean and variance of the draws, minus
/// the current-control sample size. May be negative.
inline double ehss_moment_matched(std::span<const double> pi_cc, std::int64_t n_cc) {
    if (pi_cc.empty()) throw MissingEstimand("no pi_CC draws");
    const double m = mean_of(pi_cc);
    const double var = variance_of(pi_cc);
    if (!(var > 1e-12 * m * (1.0 - m))) throw DegenerateVariance("posterior variance of pi_CC is zero");
    return m * (1.0 - m) / var - 1.0 - static_cast<double>(n_cc);
}

inline double ehss_moment_matched(const PosteriorChain& chain, std::int64_t n_cc) {
    return ehss_moment_matched(chain.pi_cc, n_cc);
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
inline double batch_means_se(std::span<const double> x, std::size_t batches = 50) {
    const std::size_t len = x.size() / batches;
    if (len < 2) return std::sqrt(variance_of(x) / static_cast<double>(x.size()));
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b) means[b] = mean_of(x.subspan(b * len, len));
    return std::sqrt(variance_of(means) / static_cast<double>(batches));
}

} // namespace dpborrow
