#pragma once

#include "dpborrow/errors.hpp"
#include "dpborrow/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dpborrow {

// Distribution families used by the samplers. Scale parameters follow the
// (shape, scale) convention throughout; InverseGamma(shape, scale) has density
// proportional to x^{-shape-1} exp(-scale / x).
struct Beta { double a; double b; };
struct Gamma { double shape; double scale; };
struct InverseGamma { double shape; double scale; };
struct Normal { double mu; double sd; };
struct TruncatedNormal { double mu; double sd; double lo; double hi; };
struct MultivariateNormal { Eigen::VectorXd mean; Eigen::MatrixXd cov; };
struct Bernoulli { double p; };
struct Binomial { std::int64_t n; double p; };
struct Uniform { double lo; double hi; };
struct Categorical { std::vector<double> weights; };

using DistSpec = std::variant<Beta, Gamma, InverseGamma, Normal, TruncatedNormal, MultivariateNormal, Bernoulli,
                              Binomial, Uniform, Categorical>;

/// A draw: continuous scalars as double, counts and category indices as int64,
/// multivariate normal draws as vectors.
using Value = std::variant<double, std::int64_t, Eigen::VectorXd>;

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw InvalidParameter(what);
}

inline bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

inline double lgamma(double x) {
    using double_precision = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
    return boost::math::lgamma(x, double_precision());
}

inline double log_beta_fn(double a, double b) {
    return lgamma(a) + lgamma(b) - lgamma(a + b);
}

// Pulls a value in [0, 1] into the open unit interval.
inline double open_unit(double v) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - 0x1.0p-53;
    if (!(v > lo)) return lo;
    if (!(v < hi)) return hi;
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// validation

inline void validate(const Beta& d) { detail::require(detail::positive_finite(d.a) && detail::positive_finite(d.b), "Beta: shapes must be positive"); }
inline void validate(const Gamma& d) { detail::require(detail::positive_finite(d.shape) && detail::positive_finite(d.scale), "Gamma: shape and scale must be positive"); }
inline void validate(const InverseGamma& d) { detail::require(detail::positive_finite(d.shape) && detail::positive_finite(d.scale), "InverseGamma: shape and scale must be positive"); }
inline void validate(const Normal& d) { detail::require(std::isfinite(d.mu) && detail::positive_finite(d.sd), "Normal: sd must be positive"); }
inline void validate(const TruncatedNormal& d) {
    detail::require(std::isfinite(d.mu) && detail::positive_finite(d.sd), "TruncatedNormal: sd must be positive");
    detail::require(d.lo < d.hi, "TruncatedNormal: lo must be below hi");
}
inline void validate(const MultivariateNormal& d) {
    detail::require(d.mean.size() > 0 && d.cov.rows() == d.mean.size() && d.cov.cols() == d.mean.size(),
                    "MultivariateNormal: dimension mismatch");
    detail::require(d.mean.allFinite() && d.cov.allFinite(), "MultivariateNormal: non-finite parameters");
    const double scale = std::max(1.0, d.cov.cwiseAbs().maxCoeff());
    detail::require((d.cov - d.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                    "MultivariateNormal: covariance must be symmetric");
}
inline void validate(const Bernoulli& d) { detail::require(d.p >= 0.0 && d.p <= 1.0, "Bernoulli: p must lie in [0,1]"); }
inline void validate(const Binomial& d) {
    detail::require(d.n >= 0, "Binomial: n must be non-negative");
    detail::require(d.p >= 0.0 && d.p <= 1.0, "Binomial: p must lie in [0,1]");
}
inline void validate(const Uniform& d) { detail::require(std::isfinite(d.lo) && std::isfinite(d.hi) && d.lo < d.hi, "Uniform: lo must be below hi"); }
inline void validate(const Categorical& d) {
    detail::require(!d.weights.empty(), "Categorical: no categories");
    double total = 0.0;
    for (double w : d.weights) {
        detail::require(std::isfinite(w) && w >= 0.0, "Categorical: weights must be non-negative");
        total += w;
    }
    detail::require(total > 0.0, "Categorical: weights sum to zero");
}
inline void validate(const DistSpec& d) {
    std::visit([](const auto& x) { validate(x); }, d);
}

// ---------------------------------------------------------------------------
// core variate generators

inline double std_normal(RngStream& rng) {
    if (rng.has_spare_normal) {
        rng.has_spare_normal = false;
        return rng.spare_normal;
    }
    // Marsaglia polar method.
    double x, y, s;
    do {
        x = 2.0 * rng.uniform_open() - 1.0;
        y = 2.0 * rng.uniform_open() - 1.0;
        s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    rng.spare_normal = y * f;
    rng.has_spare_normal = true;
    return x * f;
}

namespace detail {

// Marsaglia-Tsang squeeze method; valid for shape >= 1.
inline double gamma_mt(double shape, RngStream& rng) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = std_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

} // namespace detail

/// log of a unit-scale Gamma(shape) variate. For shape < 1 the draw is boosted:
/// G(a) = G(a + 1) * U^{1/a}, evaluated in log space so that tiny shapes
/// (which put most mass extremely close to zero) do not underflow.
inline double log_gamma_variate(double shape, RngStream& rng) {
    if (shape >= 1.0) return std::log(detail::gamma_mt(shape, rng));
    const double boosted = std::log(detail::gamma_mt(shape + 1.0, rng));
    return boosted + std::log(rng.uniform_open()) / shape;
}

inline double gamma_variate(double shape, RngStream& rng) {
    if (shape >= 1.0) return detail::gamma_mt(shape, rng);
    return std::exp(log_gamma_variate(shape, rng));
}

inline double draw(const Beta& d, RngStream& rng) {
    validate(d);
    // Beta(1, b) and Beta(a, 1) by inversion
    if (d.a == 1.0) return detail::open_unit(-std::expm1(std::log(rng.uniform_open()) / d.b));
    if (d.b == 1.0) return detail::open_unit(std::exp(std::log(rng.uniform_open()) / d.a));
    if (d.a >= 1.0 && d.b >= 1.0) {
        const double x = detail::gamma_mt(d.a, rng);
        const double y = detail::gamma_mt(d.b, rng);
        return detail::open_unit(x / (x + y));
    }
    const double lx = log_gamma_variate(d.a, rng);
    const double ly = log_gamma_variate(d.b, rng);
    return detail::open_unit(1.0 / (1.0 + std::exp(ly - lx)));
}

inline double draw(const Gamma& d, RngStream& rng) {
    validate(d);
    return gamma_variate(d.shape, rng) * d.scale;
}

inline double draw(const InverseGamma& d, RngStream& rng) {
    validate(d);
    // 1/X with X ~ Gamma(shape, rate = scale).
    return d.scale / gamma_variate(d.shape, rng);
}

inline double draw(const Normal& d, RngStream& rng) {
    validate(d);
    return d.mu + d.sd * std_normal(rng);
}

/// Inverse-CDF sampling on the standardized interval. Upper-tail intervals use
/// survival functions and lower-tail intervals are mirrored, so the transform
/// stays accurate far from the mean.
inline double draw(const TruncatedNormal& d, RngStream& rng) {
    validate(d);
    const boost::math::normal_distribution<double> z01;
    double a = (d.lo - d.mu) / d.sd;
    double b = (d.hi - d.mu) / d.sd;
    bool mirrored = false;
    if (b <= 0.0) {
        mirrored = true;
        std::swap(a, b);
        a = -a;
        b = -b;
    }
    const double u = rng.uniform_open();
    double x;
    if (a >= 0.0) {
        const double qa = std::isfinite(a) ? boost::math::cdf(boost::math::complement(z01, a)) : 1.0;
        const double qb = std::isfinite(b) ? boost::math::cdf(boost::math::complement(z01, b)) : 0.0;
        const double q = qa - u * (qa - qb);
        x = q <= 0.0 ? a : boost::math::quantile(boost::math::complement(z01, q));
    } else {
        const double pa = std::isfinite(a) ? boost::math::cdf(z01, a) : 0.0;
        const double pb = std::isfinite(b) ? boost::math::cdf(z01, b) : 1.0;
        x = boost::math::quantile(z01, pa + u * (pb - pa));
    }
    x = std::clamp(x, a, b);
    if (mirrored) x = -x;
    return std::clamp(d.mu + d.sd * x, d.lo, d.hi);
}

inline std::int64_t draw_bernoulli(double p, RngStream& rng) { return rng.uniform_open() < p ? 1 : 0; }

inline std::int64_t draw(const Bernoulli& d, RngStream& rng) {
    validate(d);
    return draw_bernoulli(d.p, rng);
}

inline std::int64_t draw(const Binomial& d, RngStream& rng) {
    validate(d);
    std::int64_t k = 0;
    for (std::int64_t i = 0; i < d.n; ++i) k += draw_bernoulli(d.p, rng);
    return k;
}

inline double draw(const Uniform& d, RngStream& rng) {
    validate(d);
    return d.lo + (d.hi - d.lo) * rng.uniform_open();
}

inline std::size_t draw_categorical(std::span<const double> weights, RngStream& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double target = rng.uniform_open() * total;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        last_positive = i;
        if (target < weights[i]) return i;
        target -= weights[i];
    }
    return last_positive;
}

inline std::int64_t draw(const Categorical& d, RngStream& rng) {
    validate(d);
    return static_cast<std::int64_t>(draw_categorical(d.weights, rng));
}

/// Category index from unnormalized log weights (max-subtracted before
/// exponentiation). Entries equal to -inf are never selected.
inline std::size_t draw_categorical_log(std::span<const double> log_weights, RngStream& rng,
                                        std::vector<double>& scratch) {
    double top = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) top = std::max(top, lw);
    if (!std::isfinite(top)) throw SamplerAbort("categorical draw with no finite log weight");
    scratch.resize(log_weights.size());
    for (std::size_t i = 0; i < log_weights.size(); ++i) scratch[i] = std::exp(log_weights[i] - top);
    return draw_categorical(scratch, rng);
}

namespace detail {

// Cholesky factor of a covariance or precision matrix, adding diagonal jitter
// (1e-10 relative to the mean diagonal, growing tenfold per retry) on failure.
inline Eigen::LLT<Eigen::MatrixXd> jittered_llt(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt;
    const double base = std::max(m.diagonal().cwiseAbs().mean(), 1e-300);
    double jitter = 1e-10 * base;
    for (int attempt = 0; attempt < 8; ++attempt, jitter *= 10.0) {
        Eigen::MatrixXd bumped = m;
        bumped.diagonal().array() += jitter;
        llt.compute(bumped);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw InvalidParameter("matrix is not positive semi-definite");
}

} // namespace detail

inline Eigen::VectorXd draw(const MultivariateNormal& d, RngStream& rng) {
    validate(d);
    const auto llt = detail::jittered_llt(d.cov);
    Eigen::VectorXd z(d.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
    return d.mean + llt.matrixL() * z;
}

/// Draw from N(Q^{-1} b, Q^{-1}) given a precision matrix Q and linear term b.
/// This is the form every normal-linear conjugate update produces.
inline Eigen::VectorXd draw_normal_canonical(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                             RngStream& rng) {
    const auto llt = detail::jittered_llt(precision);
    const Eigen::VectorXd mean = llt.solve(linear);
    Eigen::VectorXd z(linear.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
    // If Q = L L^T then L^{-T} z has covariance Q^{-1}.
    return mean + llt.matrixU().solve(z);
}

inline Value draw(const DistSpec& d, RngStream& rng) {
    return std::visit(
        [&rng](const auto& x) -> Value { return draw(x, rng); },
        d);
}

// ---------------------------------------------------------------------------
// log densities (natural log; -inf outside the support)

namespace detail {
constexpr double neg_inf = -std::numeric_limits<double>::infinity();
constexpr double half_log_2pi = 0.91893853320467274178;
} // namespace detail

inline double log_density(const Beta& d, double x) {
    validate(d);
    if (!(x > 0.0 && x < 1.0)) {
        // Boundary values carry finite density only for unit shapes.
        if (x == 0.0 && d.a == 1.0) return -detail::log_beta_fn(d.a, d.b);
        if (x == 1.0 && d.b == 1.0) return -detail::log_beta_fn(d.a, d.b);
        return detail::neg_inf;
    }
    return (d.a - 1.0) * std::log(x) + (d.b - 1.0) * std::log1p(-x) - detail::log_beta_fn(d.a, d.b);
}

inline double log_density(const Gamma& d, double x) {
    validate(d);
    if (!(x > 0.0)) return detail::neg_inf;
    return (d.shape - 1.0) * std::log(x) - x / d.scale - detail::lgamma(d.shape) - d.shape * std::log(d.scale);
}

inline double log_density(const InverseGamma& d, double x) {
    validate(d);
    if (!(x > 0.0)) return detail::neg_inf;
    return d.shape * std::log(d.scale) - detail::lgamma(d.shape) - (d.shape + 1.0) * std::log(x) - d.scale / x;
}

inline double log_density(const Normal& d, double x) {
    validate(d);
    const double z = (x - d.mu) / d.sd;
    return -0.5 * z * z - std::log(d.sd) - detail::half_log_2pi;
}

inline double log_density(const TruncatedNormal& d, double x) {
    validate(d);
    if (x < d.lo || x > d.hi) return detail::neg_inf;
    const boost::math::normal_distribution<double> z01;
    const double a = (d.lo - d.mu) / d.sd;
    const double b = (d.hi - d.mu) / d.sd;
    double mass;
    if (a >= 0.0)
        mass = boost::math::cdf(boost::math::complement(z01, a)) - (std::isfinite(b) ? boost::math::cdf(boost::math::complement(z01, b)) : 0.0);
    else
        mass = (std::isfinite(b) ? boost::math::cdf(z01, b) : 1.0) - (std::isfinite(a) ? boost::math::cdf(z01, a) : 0.0);
    return log_density(Normal{d.mu, d.sd}, x) - std::log(mass);
}

inline double log_density(const MultivariateNormal& d, const Eigen::VectorXd& x) {
    validate(d);
    if (x.size() != d.mean.size()) throw InvalidParameter("MultivariateNormal: point has wrong dimension");
    const auto llt = detail::jittered_llt(d.cov);
    const Eigen::VectorXd r = llt.matrixL().solve(x - d.mean);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * r.squaredNorm() - 0.5 * log_det - static_cast<double>(x.size()) * detail::half_log_2pi;
}

inline double log_density(const Bernoulli& d, std::int64_t x) {
    validate(d);
    if (x == 1) return std::log(d.p);
    if (x == 0) return std::log1p(-d.p);
    return detail::neg_inf;
}

inline double log_density(const Binomial& d, std::int64_t k) {
    validate(d);
    if (k < 0 || k > d.n) return detail::neg_inf;
    const double n = static_cast<double>(d.n);
    const double kk = static_cast<double>(k);
    const double log_choose = detail::lgamma(n + 1.0) - detail::lgamma(kk + 1.0) - detail::lgamma(n - kk + 1.0);
    const double lp = k > 0 ? kk * std::log(d.p) : 0.0;
    const double lq = k < d.n ? (n - kk) * std::log1p(-d.p) : 0.0;
    return log_choose + lp + lq;
}

inline double log_density(const Uniform& d, double x) {
    validate(d);
    if (x < d.lo || x > d.hi) return detail::neg_inf;
    return -std::log(d.hi - d.lo);
}

inline double log_density(const Categorical& d, std::int64_t i) {
    validate(d);
    if (i < 0 || static_cast<std::size_t>(i) >= d.weights.size()) return detail::neg_inf;
    double total = 0.0;
    for (double w : d.weights) total += w;
    return std::log(d.weights[static_cast<std::size_t>(i)] / total);
}

inline double log_density(const DistSpec& d, const Value& x) {
    return std::visit(
        [&x](const auto& dist) -> double {
            using T = std::decay_t<decltype(dist)>;
            if constexpr (std::is_same_v<T, MultivariateNormal>) {
                if (const auto* v = std::get_if<Eigen::VectorXd>(&x)) return log_density(dist, *v);
                throw InvalidParameter("MultivariateNormal density needs a vector point");
            } else if constexpr (std::is_same_v<T, Bernoulli> || std::is_same_v<T, Binomial> ||
                                 std::is_same_v<T, Categorical>) {
                if (const auto* i = std::get_if<std::int64_t>(&x)) return log_density(dist, *i);
                if (const auto* r = std::get_if<double>(&x)) {
                    if (*r != std::floor(*r)) return detail::neg_inf;
                    return log_density(dist, static_cast<std::int64_t>(*r));
                }
                throw InvalidParameter("discrete density needs an integer point");
            } else {
                if (const auto* r = std::get_if<double>(&x)) return log_density(dist, *r);
                if (const auto* i = std::get_if<std::int64_t>(&x)) return log_density(dist, static_cast<double>(*i));
                throw InvalidParameter("scalar density needs a scalar point");
            }
        },
        d);
}

} // namespace dpborrow
