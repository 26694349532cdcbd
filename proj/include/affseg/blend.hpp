#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "affseg/transform.hpp"
#include "affseg/volume.hpp"

namespace affseg {

struct BlendProfile {
    std::array<double, 3> t{1.5, 1.5, 1.5};  // decay exponents, (z, y, x)
    double overlap = 0.5;
    // Evaluate exp(+sum [r(p-r)]^-t) as printed instead of the centre-weighted
    // bump. Kept for comparison only: it weights borders above the centre.
    bool literal = false;
};

void validate(const BlendProfile& p);

struct PatchLayout {
    Shape volume;
    Shape patch;
    std::vector<Coord> origins;  // z-major, then y, then x
};

// Regular overlap grid: per axis the stride is floor(p * (1 - overlap))
// (at least 1), with one final patch flush against the far border.
PatchLayout make_layout(const Shape& volume, const Shape& patch, double overlap);

// Log of the bump weight at local coordinate r (z, y, x) in a patch of extent
// p. With c = (r + 1/2) / p per axis the value is -sum (c(1-c))^-t: largest at
// the centre, symmetric under r -> p - 1 - r. r may be fractional.
double bump_logweight(const std::array<double, 3>& r, const Shape& p, const BlendProfile& profile);

// Weighted average of overlapping patches; patches[i] sits at layout.origins[i].
// Weights are normalised per voxel in log space. Affinity entries count only
// when both edge endpoints lie inside the patch. Throws std::invalid_argument
// on shape mismatches or when an output value has no contributing patch.
ImageVolume blend_patches(const PatchLayout& layout, std::span<const ImageVolume> patches,
                          const BlendProfile& profile);
AffinityVolume blend_patches(const PatchLayout& layout, std::span<const AffinityVolume> patches,
                             const BlendProfile& profile);

// The xy dihedral group (8) optionally crossed with a z flip (16). Identity first.
std::vector<DihedralTransform> tta_variants(int count = 16);

// Maps each output back through the inverse transform and averages in-bounds
// edges. Each entry pairs a transform with the output produced on the
// correspondingly transformed input.
AffinityVolume tta_average(const std::vector<std::pair<DihedralTransform, AffinityVolume>>& outputs);

}  // namespace affseg
