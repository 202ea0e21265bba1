#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mvlift/common.hpp"

namespace mvlift {

// Deterministic random source. All randomness in the library flows through
// this class so that runs are bit-reproducible for a given seed; the normal
// draw is an explicit Box-Muller instead of std::normal_distribution, whose
// output sequence is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t raw() { return gen_(); }

    /// Uniform double in [0, 1), a multiple of 2^-53.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (second value cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t integer(std::uint64_t n) {
        detail::require(n > 0, "Rng::integer: n must be positive");
        const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = 0;
        do {
            x = gen_();
        } while (x >= bound);
        return x % n;
    }

    /// Independent stream derived from this rng's seed and a stream id.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t h = detail::fnv1a(&seed_, sizeof(seed_));
        h = detail::fnv1a(&stream, sizeof(stream), h);
        return Rng(h);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(integer(i))]);
        }
    }

  private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline void fill_normal(Rng& rng, MatrixXd& m) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
}

inline MatrixXd normal_matrix(Rng& rng, Index rows, Index cols) {
    MatrixXd m(rows, cols);
    fill_normal(rng, m);
    return m;
}

}  // namespace mvlift
