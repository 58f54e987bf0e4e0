#ifndef NOFAS_RNG_HPP
#define NOFAS_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace nofas {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double normal_draw(Rng& rng, double mean = 0.0, double std = 1.0) {
    std::normal_distribution<double> d(mean, std);
    return d(rng);
}

inline double uniform_draw(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double mean = 0.0,
                                         double std = 1.0) {
    std::normal_distribution<double> d(mean, std);
    std::vector<double> out(n);
    for (double& v : out) v = d(rng);
    return out;
}

/// k indices drawn uniformly without replacement from [0, n).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace nofas

#endif
