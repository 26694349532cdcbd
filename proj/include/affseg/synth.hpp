#pragma once

#include <array>
#include <cstdint>

#include "affseg/volume.hpp"

namespace affseg {

struct SynthSpec {
    Shape shape{64, 64, 64};
    std::size_t n_sites = 20;
    std::array<double, 3> anisotropy{5.0, 1.0, 1.0};  // metric weight per axis, (z, y, x)
    std::uint64_t seed = 7;
};

// Nearest-site labelling under sqrt(sum (w_a * d_a)^2). Sites are uniform in
// the continuous box; voxel centres sit at integer coordinates. Labels are
// 1..n_sites (ties go to the lower site index); empty cells are allowed.
SegVolume voronoi_labels(const SynthSpec& spec, unsigned threads = 1);

// Relabels to 0 every voxel within `width` voxels (6-connected steps) of a
// different label, leaving a 2*width thick background membrane between cells.
SegVolume carve_boundaries(const SegVolume& seg, std::size_t width);

struct NoiseSpec {
    double flip_prob = 0.0;
    double gauss_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Per in-bounds edge, in storage order: with probability flip_prob replace
// v by 1 - v, then add N(0, gauss_sigma^2) and clamp to [0,1].
AffinityVolume corrupt_affinity(const AffinityVolume& aff, const NoiseSpec& noise);

}  // namespace affseg
