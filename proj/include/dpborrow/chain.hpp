#pragma once

#include "dpborrow/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dpborrow {

struct ChainMetadata {
    std::string method;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::string config_digest;
    int iters = 0;
    int burn_in = 0;
    int thin = 1;
};

/// Retained draws of one analysis. Vectors that do not apply to the method
/// (e.g. allocations for the conjugate comparators) are left empty; every
/// non-empty draw vector has size() entries.
struct PosteriorChain {
    OutcomeKind outcome_kind = OutcomeKind::BinomialSummary;

    std::vector<double> pi_cc;
    std::vector<double> pi_ct;
    std::vector<double> gamma;
    std::vector<double> sigma2;

    // Allocation labels, row-major: draw d, control j at z[d * num_controls + j].
    // Control order is control_ids (historical first, current control last).
    std::vector<std::int32_t> z;
    std::vector<std::string> control_ids;

    std::vector<double> m;
    std::vector<double> phi;
    std::vector<int> k;

    ChainMetadata meta;

    std::size_t size() const {
        if (!pi_cc.empty()) return pi_cc.size();
        if (!gamma.empty()) return gamma.size();
        if (!k.empty()) return k.size();
        return 0;
    }

    std::size_t num_controls() const { return control_ids.size(); }
    bool has_allocations() const { return !z.empty() && !control_ids.empty(); }

    std::int32_t allocation(std::size_t draw, std::size_t control) const {
        return z[draw * num_controls() + control];
    }
};

} // namespace dpborrow
