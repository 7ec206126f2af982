#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace npull
{
    /// Counter-based generator: the n-th draw of a (seed, stream) pair is a pure
    /// function of (seed, stream, n), so substreams can be created in any order
    /// and still yield the same values on every platform.
    class CounterRng
    {
    public:
        explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
            : seed_(seed), stream_(stream), key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL)))
        {
        }

        CounterRng substream(std::uint64_t id) const
        {
            return CounterRng(mix(seed_ + 0x9E3779B97F4A7C15ULL * (stream_ + 1)), id);
        }

        std::uint64_t next_u64()
        {
            ++counter_;
            return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
        }

        /// Uniform in [0, 1) with 53 random bits.
        double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        /// Standard normal via Box-Muller; the second variate of each pair is cached.
        double normal()
        {
            if (has_spare_) {
                has_spare_ = false;
                return spare_;
            }
            const double u1 = 1.0 - uniform();  // (0, 1]
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double theta = 2.0 * std::numbers::pi * u2;
            spare_ = r * std::sin(theta);
            has_spare_ = true;
            return r * std::cos(theta);
        }

        /// Unbiased integer in [0, n). n must be positive.
        std::size_t below(std::size_t n)
        {
            const std::uint64_t bound = static_cast<std::uint64_t>(n);
            const std::uint64_t threshold = (0 - bound) % bound;
            for (;;) {
                const unsigned __int128 product =
                    static_cast<unsigned __int128>(next_u64()) * bound;
                if (static_cast<std::uint64_t>(product) >= threshold) {
                    return static_cast<std::size_t>(product >> 64);
                }
            }
        }

        std::uint64_t seed() const noexcept { return seed_; }
        std::uint64_t stream() const noexcept { return stream_; }

    private:
        static std::uint64_t mix(std::uint64_t z)
        {
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            return z ^ (z >> 31);
        }

        std::uint64_t seed_;
        std::uint64_t stream_;
        std::uint64_t key_;
        std::uint64_t counter_ = 0;
        double spare_ = 0.0;
        bool has_spare_ = false;
    };
}
