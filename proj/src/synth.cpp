#include "affseg/synth.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "affseg/parallel.hpp"
#include "affseg/rng.hpp"

namespace affseg {

SegVolume voronoi_labels(const SynthSpec& spec, unsigned threads)
{
    validate(spec.shape);
    if (spec.n_sites == 0)
        throw std::invalid_argument("synthetic volume needs at least one site");
    for (double w : spec.anisotropy)
        if (!(w > 0.0))
            throw std::invalid_argument("anisotropy weights must be positive");

    const Shape& s = spec.shape;
    SeededRng rng(spec.seed);
    std::vector<std::array<double, 3>> sites(spec.n_sites);
    for (auto& site : sites)
        site = {rng.uniform(0.0, static_cast<double>(s.z)),
                rng.uniform(0.0, static_cast<double>(s.y)),
                rng.uniform(0.0, static_cast<double>(s.x))};

    const auto& w = spec.anisotropy;
    SegVolume seg(s);
    parallel_blocks(s.z, threads, [&](std::size_t z) {
        for (std::size_t y = 0; y < s.y; ++y)
            for (std::size_t x = 0; x < s.x; ++x) {
                double best = std::numeric_limits<double>::infinity();
                std::uint64_t label = 0;
                for (std::size_t i = 0; i < sites.size(); ++i) {
                    const double dz = w[0] * (static_cast<double>(z) - sites[i][0]);
                    const double dy = w[1] * (static_cast<double>(y) - sites[i][1]);
                    const double dx = w[2] * (static_cast<double>(x) - sites[i][2]);
                    const double d = dz * dz + dy * dy + dx * dx;
                    if (d < best) {
                        best = d;
                        label = i + 1;
                    }
                }
                seg.at(z, y, x) = label;
            }
    });
    return seg;
}

SegVolume carve_boundaries(const SegVolume& seg, std::size_t width)
{
    SegVolume out = seg;
    const Shape& s = seg.shape();
    for (std::size_t pass = 0; pass < width; ++pass) {
        const SegVolume prev = out;
        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x) {
                    const auto l = prev.at(z, y, x);
                    if (l == 0)
                        continue;
                    // Pass 0 looks for foreign labels; later passes grow the membrane.
                    auto differs = [&](std::uint64_t n) { return pass == 0 ? n != l : n == 0; };
                    const bool edge = (x > 0 && differs(prev.at(z, y, x - 1))) ||
                                      (x + 1 < s.x && differs(prev.at(z, y, x + 1))) ||
                                      (y > 0 && differs(prev.at(z, y - 1, x))) ||
                                      (y + 1 < s.y && differs(prev.at(z, y + 1, x))) ||
                                      (z > 0 && differs(prev.at(z - 1, y, x))) ||
                                      (z + 1 < s.z && differs(prev.at(z + 1, y, x)));
                    if (edge)
                        out.at(z, y, x) = 0;
                }
    }
    return out;
}

AffinityVolume corrupt_affinity(const AffinityVolume& aff, const NoiseSpec& noise)
{
    if (!(noise.flip_prob >= 0.0 && noise.flip_prob <= 1.0))
        throw std::invalid_argument("flip probability must be in [0,1]");
    if (!(noise.gauss_sigma >= 0.0))
        throw std::invalid_argument("noise sigma must be non-negative");

    SeededRng rng(noise.seed);
    AffinityVolume out = aff;
    const Shape& s = aff.shape();
    for (std::size_t c = 0; c < aff.channels(); ++c)
        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x) {
                    float& v = out.at(c, z, y, x);
                    if (!aff.in_bounds(c, z, y, x)) {
                        v = 0.0f;
                        continue;
                    }
                    double value = v;
                    if (noise.flip_prob > 0.0 && rng.bernoulli(noise.flip_prob))
                        value = 1.0 - value;
                    if (noise.gauss_sigma > 0.0)
                        value += noise.gauss_sigma * rng.normal();
                    v = static_cast<float>(std::clamp(value, 0.0, 1.0));
                }
    return out;
}

}  // namespace affseg
