#pragma once

#include <cstdint>
#include <random>

namespace dpborrow {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// A seedable random stream identified by (seed, stream_id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the standard,
/// seeded through std::seed_seq (also fully specified). All variate algorithms
/// in distributions.hpp are built on raw 64-bit words from this engine, never on
/// the implementation-defined <random> distributions, so draw sequences are
/// identical across platforms and standard libraries.
///
/// Independent replicates and chains use distinct stream ids under one master
/// seed; child() derives nested streams (replicate -> method) without coupling
/// their draw order.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    /// Number of 64-bit words consumed so far.
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64() {
        ++position_;
        return engine_();
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Stream for a sub-task, e.g. one method inside one replicate.
    RngStream child(std::uint64_t key) const {
        return RngStream(seed_, detail::splitmix64(detail::splitmix64(stream_id_) ^ (key + 0x632BE59BD9B4E019ULL)));
    }

    // Cached second value of the polar normal method.
    bool has_spare_normal = false;
    double spare_normal = 0.0;

private:
    static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32),
                          0x5eedu};
        return std::mt19937_64(seq);
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

} // namespace dpborrow
