#pragma once

// Counter-based random numbers: Philox4x32-10 (Salmon et al., SC'11) keyed by
// a 64-bit seed. A stream is identified by (seed, stream index), so every
// Monte Carlo sample owns an independent, reproducible sequence no matter
// which thread evaluates it.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace metriq {

class Philox4x32 {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

  private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Sequence of uniforms and normals for one (seed, stream) pair.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    /// Independent child stream; children of distinct indices never overlap
    /// with each other or with the parent.
    RandomStream split(std::uint32_t child) const noexcept {
        RandomStream s = *this;
        s.domain_ = domain_ + 1 + child;
        s.block_ = 0;
        s.have_ = 0;
        return s;
    }

    std::uint64_t next_u64() noexcept {
        if (have_ == 0)
            refill();
        --have_;
        return buf_[have_];
    }

    /// Uniform on (0, 1), 53 random bits.
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal pair by the Box-Muller transform.
    std::array<double, 2> normal_pair() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(th), r * std::sin(th)};
    }

    /// Fills `out[0..n)` with standard normals.
    void normals(double *out, std::size_t n) noexcept {
        std::size_t i = 0;
        for (; i + 1 < n; i += 2) {
            const auto z = normal_pair();
            out[i] = z[0];
            out[i + 1] = z[1];
        }
        if (i < n)
            out[i] = normal_pair()[0];
    }

  private:
    void refill() noexcept {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream_),
                                      static_cast<std::uint32_t>(stream_ >> 32), domain_, block_++};
        const auto r = Philox4x32::block(ctr, key_);
        buf_[0] = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
        buf_[1] = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
        have_ = 2;
    }

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint32_t domain_ = 0;
    std::uint32_t block_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int have_ = 0;
};

} // namespace metriq
