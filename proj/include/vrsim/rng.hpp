#pragma once

#include <cmath>
#include <cstdint>

namespace vrsim {

// splitmix64; used to expand seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** with hand-rolled draw helpers. The standard library engines are
// portable but its distributions are not specified bit for bit, so every draw
// path is implemented here. Each consumer owns a substream derived from the
// master seed and a stream id; adding a consumer never shifts another
// consumer's sequence.
class Rng {
  public:
    Rng() : Rng(0, 0) {}

    Rng(std::uint64_t master_seed, std::uint64_t stream_id) {
        std::uint64_t sm = master_seed ^ (stream_id * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL);
        for (auto& w : m_state) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        std::uint64_t result = rotl(m_state[1] * 5, 7) * 9;
        std::uint64_t t = m_state[1] << 17;
        m_state[2] ^= m_state[0];
        m_state[3] ^= m_state[1];
        m_state[1] ^= m_state[2];
        m_state[0] ^= m_state[3];
        m_state[2] ^= t;
        m_state[3] = rotl(m_state[3], 45);
        return result;
    }

    // Uniform draw from {0, ..., bound-1}, rejection-debiased.
    std::uint32_t uniform(std::uint32_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t span = bound;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::uint32_t>(x % span);
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform01() < p;
    }

    // Standard normal via Box-Muller; caches the spare draw.
    double normal() {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        m_spare = r * std::sin(theta);
        m_has_spare = true;
        return r * std::cos(theta);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t m_state[4];
    double m_spare = 0.0;
    bool m_has_spare = false;
};

}  // namespace vrsim
