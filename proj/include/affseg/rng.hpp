#pragma once

#include <cstdint>
#include <string_view>

namespace affseg {

// PCG32 (XSH-RR output on a 64-bit LCG). Every derived draw is built from the
// raw 32-bit outputs with integer arithmetic, so a seed reproduces the same
// sequence on any platform; std:: distributions are avoided for that reason.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on the closed range [lo, hi], without modulo bias.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

    // 53-bit uniform on [0, 1).
    double uniform01();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (one output per call).
    double normal();

    bool bernoulli(double p);
    bool coin() { return (next_u32() >> 31) != 0; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return position_; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t position_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent per-stage seed: splitmix64 of the global seed mixed with the
// FNV-1a hash of the stage name.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);

}  // namespace affseg
