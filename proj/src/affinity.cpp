#include "affseg/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "affseg/parallel.hpp"

namespace affseg {

AffinityVolume affinities_from_labels(const SegVolume& seg, const OffsetSet& offsets,
                                      unsigned threads)
{
    const Shape& s = seg.shape();
    AffinityVolume aff(s, offsets);

    // One block per (channel, slice); every block writes its own slab.
    const std::size_t blocks = offsets.size() * s.z;
    parallel_blocks(blocks, threads, [&](std::size_t b) {
        const std::size_t c = b / s.z;
        const std::size_t z = b % s.z;
        const Offset& o = offsets[c];
        const auto z2 = static_cast<std::ptrdiff_t>(z) + o.dz;
        if (z2 < 0 || z2 >= static_cast<std::ptrdiff_t>(s.z))
            return;
        for (std::size_t y = 0; y < s.y; ++y) {
            const auto y2 = static_cast<std::ptrdiff_t>(y) + o.dy;
            if (y2 < 0 || y2 >= static_cast<std::ptrdiff_t>(s.y))
                continue;
            for (std::size_t x = 0; x < s.x; ++x) {
                const auto x2 = static_cast<std::ptrdiff_t>(x) + o.dx;
                if (x2 < 0 || x2 >= static_cast<std::ptrdiff_t>(s.x))
                    continue;
                const auto a = seg.at(z, y, x);
                const auto n = seg.at(static_cast<std::size_t>(z2), static_cast<std::size_t>(y2),
                                      static_cast<std::size_t>(x2));
                aff.at(c, z, y, x) = (a != 0 && a == n) ? 1.0f : 0.0f;
            }
        }
    });
    return aff;
}

AffinityVolume select_channels(const AffinityVolume& aff, const OffsetSet& wanted)
{
    AffinityVolume out(aff.shape(), wanted);
    const std::size_t n = aff.shape().voxels();
    for (std::size_t c = 0; c < wanted.size(); ++c) {
        const int src = find_channel(aff.offsets(), wanted[c]);
        if (src < 0)
            throw std::invalid_argument("affinity volume has no channel for offset " +
                                        to_string(wanted[c]));
        std::copy_n(aff.data().begin() + static_cast<std::ptrdiff_t>(src * n), n,
                    out.data().begin() + static_cast<std::ptrdiff_t>(c * n));
    }
    return out;
}

std::vector<float> in_bounds_values(const AffinityVolume& aff, std::span<const int> channels)
{
    const Shape& s = aff.shape();
    std::vector<float> out;
    for (int c : channels) {
        const auto ch = static_cast<std::size_t>(c);
        for (std::size_t z = 0; z < s.z; ++z)
            for (std::size_t y = 0; y < s.y; ++y)
                for (std::size_t x = 0; x < s.x; ++x)
                    if (aff.in_bounds(ch, z, y, x))
                        out.push_back(aff.at(ch, z, y, x));
    }
    return out;
}

std::vector<float> in_bounds_values(const AffinityVolume& aff)
{
    std::vector<int> all(aff.channels());
    std::iota(all.begin(), all.end(), 0);
    return in_bounds_values(aff, all);
}

float percentile(std::span<const float> values, double q)
{
    if (values.empty())
        throw std::invalid_argument("percentile of an empty set");
    if (!(q >= 0.0 && q <= 100.0))
        throw std::invalid_argument("percentile rank must be in [0,100]");

    const auto n = values.size();
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) / 100.0));
    const std::size_t idx = rank == 0 ? 0 : std::min(rank - 1, n - 1);

    std::vector<float> tmp(values.begin(), values.end());
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(idx), tmp.end());
    return tmp[idx];
}

float percentile_subsampled(std::span<const float> values, double q, std::size_t stride)
{
    if (stride == 0)
        throw std::invalid_argument("percentile stride must be at least 1");
    if (stride == 1)
        return percentile(values, q);
    std::vector<float> sample;
    sample.reserve(values.size() / stride + 1);
    for (std::size_t i = 0; i < values.size(); i += stride)
        sample.push_back(values[i]);
    return percentile(sample, q);
}

}  // namespace affseg
