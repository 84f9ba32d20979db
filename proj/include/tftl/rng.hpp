#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tftl {

// All randomness in the engine flows from one root seed, fanned out by
// labeled derivation so that independent components (dropout, init, shuffles,
// MC passes, sweep runs) consume independent streams regardless of execution
// order. Distribution sampling is hand-rolled from raw engine bits because
// std::uniform_real_distribution / std::normal_distribution are not required
// to be bit-identical across standard library implementations.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0);

class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}
    RngStream(std::uint64_t root, std::string_view label, std::uint64_t index = 0)
        : engine_(derive_seed(root, label, index)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the spare deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo bias is
    // irrelevant at the n we use, but rejection keeps it exact anyway.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % n;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tftl
