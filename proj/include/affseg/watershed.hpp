#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "affseg/volume.hpp"

namespace affseg {

// A threshold given either as an absolute affinity or as a percentile of the
// nearest-neighbour affinity distribution.
struct Threshold {
    enum class Kind { absolute, percentile };

    Kind kind = Kind::absolute;
    double value = 0.0;

    static Threshold absolute(double v) { return {Kind::absolute, v}; }
    static Threshold percent(double p) { return {Kind::percentile, p}; }

    friend bool operator==(const Threshold&, const Threshold&) = default;
};

// "80%" is a percentile, "0.8" an absolute value.
Threshold parse_threshold(const std::string& s);
std::string to_string(const Threshold& t);

struct WatershedParams {
    Threshold t_min = Threshold::percent(1);
    Threshold t_max = Threshold::percent(80);
    std::size_t t_size_voxels = 800;  // 0 disables the size filter
    Threshold t_size_thresh = Threshold::percent(20);
    std::size_t t_dust = 600;  // 0 disables dust removal
};

struct ResolvedThresholds {
    double t_min = 0.0;
    double t_max = 1.0;
    std::size_t t_size_voxels = 0;
    double t_size_thresh = 1.0;
    std::size_t t_dust = 0;
};

// Percentile specs are evaluated exactly over every in-bounds nearest-neighbour
// affinity. Throws std::invalid_argument for a non-NN volume, a volume
// without in-bounds edges, out-of-range specs or t_min > t_max.
ResolvedThresholds resolve_params(const WatershedParams& p, const AffinityVolume& aff);

// Neighbour order used for steepest-ascent tie breaking.
enum class Direction : std::uint8_t { px, py, pz, mx, my, mz, self };

struct BasinForest {
    Shape shape;
    std::vector<Direction> parent;    // per voxel
    std::vector<std::uint32_t> basin;  // per voxel, 1..basin_count, first-voxel scan order
    std::vector<std::size_t> sizes;    // indexed by basin id; sizes[0] unused
};

// Phases 1-3: clamp, steepest ascent, basin formation.
BasinForest compute_basins(const AffinityVolume& aff, const ResolvedThresholds& t,
                           unsigned threads = 1);

// Phases 1-5. Dust removal is a separate step (see remove_dust).
SegVolume run_watershed(const AffinityVolume& aff, const ResolvedThresholds& t,
                        unsigned threads = 1);
SegVolume run_watershed(const AffinityVolume& aff, const WatershedParams& p,
                        unsigned threads = 1);

// Segments with fewer than t_dust voxels become background.
SegVolume remove_dust(const SegVolume& seg, std::size_t t_dust);

}  // namespace affseg
