#include "affseg/blend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace affseg {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t p, double overlap)
{
    if (p > extent)
        throw std::invalid_argument("patch extent " + std::to_string(p) +
                                    " exceeds volume extent " + std::to_string(extent));
    const auto stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(p) * (1.0 - overlap))));
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o + p < extent; o += stride)
        out.push_back(o);
    if (out.empty() || out.back() != extent - p)
        out.push_back(extent - p);
    return out;
}

void check_layout(const PatchLayout& layout, std::size_t patches)
{
    validate(layout.volume);
    validate(layout.patch);
    if (patches != layout.origins.size())
        throw std::invalid_argument("got " + std::to_string(patches) + " patches for " +
                                    std::to_string(layout.origins.size()) + " layout origins");
    for (const Coord& o : layout.origins) {
        const Coord far{o.z + static_cast<std::ptrdiff_t>(layout.patch.z) - 1,
                        o.y + static_cast<std::ptrdiff_t>(layout.patch.y) - 1,
                        o.x + static_cast<std::ptrdiff_t>(layout.patch.x) - 1};
        if (!contains(layout.volume, o) || !contains(layout.volume, far))
            throw std::invalid_argument("patch at (" + std::to_string(o.z) + "," +
                                        std::to_string(o.y) + "," + std::to_string(o.x) +
                                        ") leaves the volume");
    }
}

std::vector<double> logweight_table(const Shape& p, const BlendProfile& profile)
{
    std::vector<double> table(p.voxels());
    for (std::size_t z = 0; z < p.z; ++z)
        for (std::size_t y = 0; y < p.y; ++y)
            for (std::size_t x = 0; x < p.x; ++x)
                table[p.index(z, y, x)] = bump_logweight(
                    {static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)}, p,
                    profile);
    return table;
}

// Two passes per output element: the maximum contributing log weight, then
// the shifted, exponentiated weighted sums. `valid(i, c, z, y, x)` says
// whether patch i contributes to channel c at local voxel (z, y, x);
// `value(i, c, local)` returns its value; `required(c, voxel)` says whether
// the output element must be covered.
template <class Valid, class Value, class Required>
std::vector<float> blend_core(const PatchLayout& layout, const BlendProfile& profile,
                              std::size_t channels, Valid valid, Value value, Required required)
{
    validate(profile);
    const Shape& vol = layout.volume;
    const Shape& p = layout.patch;
    const auto lw = logweight_table(p, profile);
    const std::size_t nv = vol.voxels();

    std::vector<double> maxlog(channels * nv, neg_inf);
    auto for_each = [&](auto&& fn) {
        for (std::size_t i = 0; i < layout.origins.size(); ++i) {
            const Coord& o = layout.origins[i];
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t z = 0; z < p.z; ++z)
                    for (std::size_t y = 0; y < p.y; ++y)
                        for (std::size_t x = 0; x < p.x; ++x) {
                            if (!valid(i, c, z, y, x))
                                continue;
                            const std::size_t g =
                                c * nv + vol.index(static_cast<std::size_t>(o.z) + z,
                                                   static_cast<std::size_t>(o.y) + y,
                                                   static_cast<std::size_t>(o.x) + x);
                            fn(i, c, p.index(z, y, x), g);
                        }
        }
    };

    for_each([&](std::size_t, std::size_t, std::size_t local, std::size_t g) {
        maxlog[g] = std::max(maxlog[g], lw[local]);
    });

    std::vector<double> num(channels * nv, 0.0);
    std::vector<double> den(channels * nv, 0.0);
    for_each([&](std::size_t i, std::size_t c, std::size_t local, std::size_t g) {
        const double w = std::exp(lw[local] - maxlog[g]);
        num[g] += w * static_cast<double>(value(i, c, local));
        den[g] += w;
    });

    std::vector<float> out(channels * nv, 0.0f);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t v = 0; v < nv; ++v) {
            const std::size_t g = c * nv + v;
            if (den[g] > 0.0)
                out[g] = static_cast<float>(num[g] / den[g]);
            else if (required(c, v))
                throw std::invalid_argument("output element (channel " + std::to_string(c) +
                                            ", voxel " + std::to_string(v) +
                                            ") is not covered by any patch");
        }
    return out;
}

}  // namespace

void validate(const BlendProfile& p)
{
    for (double t : p.t)
        if (!(t > 0.0))
            throw std::invalid_argument("bump exponents must be positive");
    if (!(p.overlap > 0.0 && p.overlap < 1.0))
        throw std::invalid_argument("overlap must lie in (0,1)");
}

PatchLayout make_layout(const Shape& volume, const Shape& patch, double overlap)
{
    validate(volume);
    validate(patch);
    if (!(overlap > 0.0 && overlap < 1.0))
        throw std::invalid_argument("overlap must lie in (0,1)");
    PatchLayout layout{volume, patch, {}};
    for (auto z : axis_origins(volume.z, patch.z, overlap))
        for (auto y : axis_origins(volume.y, patch.y, overlap))
            for (auto x : axis_origins(volume.x, patch.x, overlap))
                layout.origins.push_back({static_cast<std::ptrdiff_t>(z),
                                          static_cast<std::ptrdiff_t>(y),
                                          static_cast<std::ptrdiff_t>(x)});
    return layout;
}

double bump_logweight(const std::array<double, 3>& r, const Shape& p, const BlendProfile& profile)
{
    const std::array<double, 3> extent{static_cast<double>(p.z), static_cast<double>(p.y),
                                       static_cast<double>(p.x)};
    double sum = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
        if (!(r[a] >= 0.0 && r[a] < extent[a]))
            throw std::invalid_argument("coordinate outside the patch");
        // Written as a product of the two half-shifted distances so that
        // r and p - 1 - r give bit-identical results.
        const double lo = r[a] + 0.5;
        const double hi = extent[a] - r[a] - 0.5;
        if (profile.literal)
            sum += std::pow(lo * hi, -profile.t[a]);
        else
            sum -= std::pow(lo * hi / (extent[a] * extent[a]), -profile.t[a]);
    }
    return sum;
}

ImageVolume blend_patches(const PatchLayout& layout, std::span<const ImageVolume> patches,
                          const BlendProfile& profile)
{
    check_layout(layout, patches.size());
    for (const auto& p : patches)
        if (!(p.shape() == layout.patch))
            throw std::invalid_argument("patch shape " + to_string(p.shape()) +
                                        " differs from layout patch " + to_string(layout.patch));
    auto data = blend_core(
        layout, profile, 1, [](auto...) { return true; },
        [&](std::size_t i, std::size_t, std::size_t local) { return patches[i][local]; },
        [](auto...) { return true; });
    return ImageVolume(layout.volume, std::move(data));
}

AffinityVolume blend_patches(const PatchLayout& layout, std::span<const AffinityVolume> patches,
                             const BlendProfile& profile)
{
    check_layout(layout, patches.size());
    if (patches.empty())
        throw std::invalid_argument("no patches to blend");
    const OffsetSet& offsets = patches.front().offsets();
    for (const auto& p : patches) {
        if (!(p.shape() == layout.patch))
            throw std::invalid_argument("patch shape " + to_string(p.shape()) +
                                        " differs from layout patch " + to_string(layout.patch));
        if (p.offsets() != offsets)
            throw std::invalid_argument("patches disagree on affinity offsets");
    }

    AffinityVolume out(layout.volume, offsets);
    auto data = blend_core(
        layout, profile, offsets.size(),
        [&](std::size_t i, std::size_t c, std::size_t z, std::size_t y, std::size_t x) {
            return patches[i].in_bounds(c, z, y, x);
        },
        [&](std::size_t i, std::size_t c, std::size_t local) { return patches[i].at(c, local); },
        [&](std::size_t c, std::size_t v) {
            const Shape& s = layout.volume;
            return out.in_bounds(c, v / s.slice(), (v / s.x) % s.y, v % s.x);
        });
    return AffinityVolume(layout.volume, offsets, std::move(data));
}

std::vector<DihedralTransform> tta_variants(int count)
{
    if (count != 8 && count != 16)
        throw std::invalid_argument("test-time augmentation uses 8 or 16 variants");
    std::vector<DihedralTransform> out;
    for (int fz = 0; fz < (count == 16 ? 2 : 1); ++fz)
        for (int k = 0; k < 2; ++k)
            for (int fy = 0; fy < 2; ++fy)
                for (int fx = 0; fx < 2; ++fx)
                    out.push_back({k, fx != 0, fy != 0, fz != 0});
    return out;
}

AffinityVolume tta_average(const std::vector<std::pair<DihedralTransform, AffinityVolume>>& outputs)
{
    if (outputs.empty())
        throw std::invalid_argument("no outputs to average");

    std::vector<AffinityVolume> restored;
    restored.reserve(outputs.size());
    for (const auto& [t, aff] : outputs)
        restored.push_back(transform_affinity(aff, inverse(t)));

    const AffinityVolume& first = restored.front();
    for (const auto& r : restored)
        if (!(r.shape() == first.shape()) || r.offsets() != first.offsets())
            throw std::invalid_argument("test-time augmentation outputs are inconsistent");

    AffinityVolume out(first.shape(), first.offsets());
    const auto n = static_cast<double>(restored.size());
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        double sum = 0.0;
        for (const auto& r : restored)
            sum += static_cast<double>(r.data()[i]);
        out.data()[i] = static_cast<float>(sum / n);
    }
    return out;
}

}  // namespace affseg
