#pragma once

#include <cstdint>
#include <limits>

namespace pdda {

// SplitMix64: a 64-bit-state generator usable with <random> distributions.
// The whole state is one integer so it can live inside value types.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) from the top 53 bits; independent of the standard
    // library's distribution implementations.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : (*this)() % n; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    bool operator==(const Rng&) const = default;

    // Derives an independent stream for a sub-component.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
        return r();
    }

private:
    std::uint64_t state_;
};

}  // namespace pdda
