#ifndef ETPR_RNG_HPP
#define ETPR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace etpr {

// All stochastic code draws through this engine plus the hand-rolled
// variate functions below, so a seed pins every result bit-for-bit
// regardless of platform stdlib internals.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based seed derivation: replicate i of a run seeded with `master`
// gets an independent stream, so replicates can execute in any order.
inline Rng child_rng(std::uint64_t master, std::uint64_t index) {
    return Rng(splitmix64(master ^ splitmix64(index)));
}

inline double uniform01(Rng& rng) {
    // 53-bit mantissa draw in (0,1); never returns 0.
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

inline double normal01(Rng& rng) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Marsaglia-Tsang squeeze; shape<1 handled by the boost trick.
inline double gamma_draw(Rng& rng, double shape, double scale = 1.0) {
    if (shape < 1.0) {
        const double u = uniform01(rng);
        return gamma_draw(rng, shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal01(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
}

// Inverse gamma with density g(r) = omega^nu / Gamma(nu) r^{-nu-1} exp(-omega/r):
// the reciprocal of a Gamma(shape=nu, rate=omega) draw.
inline double inverse_gamma_draw(Rng& rng, double nu, double omega) {
    return omega / gamma_draw(rng, nu, 1.0);
}

inline double student_t_draw(Rng& rng, double dof) {
    const double z = normal01(rng);
    const double chi2 = gamma_draw(rng, 0.5 * dof, 2.0);
    return z / std::sqrt(chi2 / dof);
}

}  // namespace etpr

#endif  // ETPR_RNG_HPP
