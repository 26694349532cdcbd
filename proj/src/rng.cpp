#include "affseg/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace affseg {

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : inc_((stream << 1u) | 1u), seed_(seed)
{
    next_u32();
    state_ += seed;
    next_u32();
    position_ = 0;
}

std::uint32_t SeededRng::next_u32()
{
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    ++position_;
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

std::uint64_t SeededRng::next_u64()
{
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

std::uint64_t SeededRng::uniform_int(std::uint64_t lo, std::uint64_t hi)
{
    if (lo > hi)
        throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t range = hi - lo + 1;
    if (range == 0)
        return next_u64();
    // Reject the top (2^64 mod range) values.
    const std::uint64_t threshold = (0 - range) % range;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold)
            return lo + r % range;
    }
}

double SeededRng::uniform01()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi)
{
    return lo + (hi - lo) * uniform01();
}

double SeededRng::normal()
{
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool SeededRng::bernoulli(double p)
{
    return uniform01() < p;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(global_seed) ^ h);
}

}  // namespace affseg
