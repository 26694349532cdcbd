#pragma once

#include <span>
#include <vector>

#include "affseg/volume.hpp"

namespace affseg {

// Binary target affinities: 1 where both endpoints carry the same nonzero
// label, 0 otherwise (including edges leaving the volume).
AffinityVolume affinities_from_labels(const SegVolume& seg, const OffsetSet& offsets,
                                      unsigned threads = 1);

// The channels of `aff` listed in `wanted`, in that order. Throws
// std::invalid_argument if one is missing.
AffinityVolume select_channels(const AffinityVolume& aff, const OffsetSet& wanted);

// Every in-bounds entry of the given channels, in storage order.
std::vector<float> in_bounds_values(const AffinityVolume& aff, std::span<const int> channels);
std::vector<float> in_bounds_values(const AffinityVolume& aff);

// Nearest-rank percentile: element ceil(q/100 * N) - 1 (clamped at 0) of the
// ascending order. Throws std::invalid_argument for empty input or q outside [0,100].
float percentile(std::span<const float> values, double q);

// Same rule applied to every `stride`-th value. For very large volumes where
// an exact percentile is not needed. Throws std::invalid_argument on stride 0.
float percentile_subsampled(std::span<const float> values, double q, std::size_t stride);

}  // namespace affseg
