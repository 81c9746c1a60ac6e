#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace resdens {

// Deterministic PRNG (xoshiro256**) with explicit, serializable state.
// Every random decision in the engine flows through this type so that runs
// are bit-reproducible across platforms and the full state fits in four
// 64-bit words inside a checkpoint. Named substreams are derived from a
// root seed, which keeps dataset workers and per-tensor init independent
// of evaluation order.
class Rng {
public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    static Rng from_state(const std::array<std::uint64_t, 4>& words) {
        Rng r;
        r.state_ = words;
        return r;
    }

    const std::array<std::uint64_t, 4>& state() const { return state_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the distribution exact.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Substream keyed by (this stream's seed material, label, index).
    Rng derive(std::string_view label, std::uint64_t index = 0) const {
        std::uint64_t h = fnv1a(label);
        std::uint64_t x = state_[0] ^ mix(h) ^ mix(index * 0x9e3779b97f4a7c15ULL + 1);
        Rng r;
        for (auto& w : r.state_) w = splitmix64(x);
        return r;
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t mix(std::uint64_t x) {
        return splitmix64(x);
    }

    std::array<std::uint64_t, 4> state_{};
};

// Fisher-Yates shuffle driven by the supplied stream.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace resdens
